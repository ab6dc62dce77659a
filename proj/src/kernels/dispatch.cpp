#include <cstdlib>
#include <string>

#include "subm/kernels.hpp"

namespace subm::kernels {
namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

template <typename T>
const Table<T>* compiled(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return &scalar::table<T>();
    case Isa::kAvx2: return avx2::table<T>();
    case Isa::kNeon: return neon::table<T>();
  }
  return nullptr;
}

template <typename T>
const Table<T>& select() {
  if (const char* env = std::getenv("SUBM_KERNELS")) {
    std::string want(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (want == isa_name(isa)) {
        if (const Table<T>* t = table_for<T>(isa)) return *t;
      }
    }
  }
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (const Table<T>* t = table_for<T>(isa)) return *t;
  }
  return scalar::table<T>();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "?";
}

template <typename T>
const Table<T>* table_for(Isa isa) {
  const Table<T>* t = compiled<T>(isa);
  return (t && cpu_has(isa)) ? t : nullptr;
}

template <typename T>
const Table<T>& active() {
  static const Table<T>& t = select<T>();
  return t;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (table_for<double>(isa)) out.push_back(isa);
  }
  return out;
}

template const Table<float>* table_for<float>(Isa);
template const Table<double>* table_for<double>(Isa);
template const Table<float>& active<float>();
template const Table<double>& active<double>();

}  // namespace subm::kernels
