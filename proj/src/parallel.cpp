#include "qpising/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace qpising {

namespace {
int g_cap = 0;
}

int default_workers() {
  if (const char* env = std::getenv("QPISING_WORKERS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_cap(int n) { g_cap = n > 0 ? n : 0; }

int worker_cap() { return g_cap > 0 ? g_cap : default_workers(); }

}  // namespace qpising
