#include "rembed/kernels.hpp"

#include <atomic>
#include <cstdlib>

#include "rembed/error.hpp"

namespace rembed::kernels {
namespace {

const Backend* lookup(const std::string& name) {
  if (name == "scalar") return &scalar_backend();
  if (name == "avx2") return avx2_backend();
  return nullptr;
}

const Backend* initial_backend() {
  if (const char* env = std::getenv("REMBED_KERNELS")) {
    if (const Backend* b = lookup(env)) return b;
    throw ContractError(std::string("REMBED_KERNELS: unknown or unavailable backend '") +
                        env + "'");
  }
  if (const Backend* b = avx2_backend()) return b;
  return &scalar_backend();
}

std::atomic<const Backend*>& active_slot() {
  static std::atomic<const Backend*> slot{initial_backend()};
  return slot;
}

}  // namespace

const Backend& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_backend(const std::string& name) {
  const Backend* b = lookup(name);
  if (b == nullptr) {
    throw ContractError("set_backend: unknown or unavailable backend '" + name + "'");
  }
  active_slot().store(b, std::memory_order_relaxed);
}

std::vector<std::string> available_backends() {
  std::vector<std::string> names{"scalar"};
  if (avx2_backend() != nullptr) names.emplace_back("avx2");
  return names;
}

}  // namespace rembed::kernels
