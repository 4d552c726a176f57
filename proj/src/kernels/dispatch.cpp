#include "kernels_impl.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace sls::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(SLS_ROBUST_HAS_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() {
    if (const char* env = std::getenv("SLS_ROBUST_KERNELS")) {
        if (std::string_view(env) == "scalar") return &scalar_table();
    }
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable& scalar_table() { return detail::scalar_table_impl(); }

const KernelTable* avx2_table() {
#if defined(SLS_ROBUST_HAS_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &detail::avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(Backend backend) {
    const KernelTable* table = backend == Backend::Scalar ? &scalar_table() : avx2_table();
    if (table == nullptr) return false;
    current().store(table, std::memory_order_release);
    return true;
}

}  // namespace sls::kernels
