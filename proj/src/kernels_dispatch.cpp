#include <atomic>
#include <cstdlib>
#include <string>

#include "oblab/kernels.hpp"

namespace oblab::kernels {
namespace {

const KernelTable* initial_table() {
    const char* env = std::getenv("OBLAB_SIMD");
    const std::string choice = env ? env : "auto";
    if (choice == "scalar") return &scalar_table();
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{initial_table()};
    return slot;
}

}  // namespace

bool supported(Backend b) { return table(b) != nullptr; }

const KernelTable* table(Backend b) {
    switch (b) {
        case Backend::scalar: return &scalar_table();
        case Backend::avx2: return avx2_table();
    }
    return nullptr;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

Backend active_backend() {
    return &active() == &scalar_table() ? Backend::scalar : Backend::avx2;
}

void set_backend(Backend b) {
    const KernelTable* t = table(b);
    active_slot().store(t ? t : &scalar_table(), std::memory_order_release);
}

std::string_view backend_name(Backend b) {
    return b == Backend::scalar ? "scalar" : "avx2";
}

}  // namespace oblab::kernels
