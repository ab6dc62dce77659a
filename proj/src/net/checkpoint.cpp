#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "subm/net.hpp"

namespace subm {
namespace {

constexpr const char* kMagic = "subm-checkpoint";
constexpr int kVersion = 1;

struct Tensor {
  std::string name;
  std::span<Real> values;
};

// Trainable parameters followed by batch-norm running statistics.
std::vector<Tensor> tensors_of(NetworkPlan& plan) {
  std::vector<Tensor> out;
  for (auto& p : plan.params()) out.push_back({p.name, p.value});
  plan.body().visit([&](Layer& l) {
    if (auto* bn = dynamic_cast<BatchNormLayer*>(&l)) {
      out.push_back({bn->name() + ".running_mean", bn->params().running_mean});
      out.push_back({bn->name() + ".running_var", bn->params().running_var});
    }
  });
  return out;
}

[[noreturn]] void bad(const std::string& msg) {
  throw Error(ErrorCode::kParseError, "checkpoint: " + msg);
}

}  // namespace

void save_checkpoint(NetworkPlan& plan, std::ostream& os) {
  const std::string arch = format_arch(plan.arch());
  std::size_t lines = 0;
  for (char c : arch) lines += c == '\n';
  os << kMagic << ' ' << kVersion << '\n';
  os << "arch " << lines << '\n' << arch;

  const auto tensors = tensors_of(plan);
  os << "tensors " << tensors.size() << '\n';
  char buf[64];
  for (const auto& t : tensors) {
    os << t.name << ' ' << t.values.size() << '\n';
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      // Shortest form that parses back to the identical value.
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<double>(t.values[i]));
      (void)ec;
      if (i) os << ' ';
      os.write(buf, end - buf);
    }
    os << '\n';
  }
  os << "end\n";
  if (!os) throw Error(ErrorCode::kIoError, "checkpoint write failed");
}

void save_checkpoint(NetworkPlan& plan, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path);
  save_checkpoint(plan, os);
}

NetworkPlan load_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) bad("missing header");
  if (version != kVersion) bad("unsupported version " + std::to_string(version));

  std::string word;
  std::size_t lines = 0;
  if (!(is >> word >> lines) || word != "arch") bad("missing arch section");
  std::string line, text;
  std::getline(is, line);
  for (std::size_t i = 0; i < lines; ++i) {
    if (!std::getline(is, line)) bad("truncated arch section");
    text += line + '\n';
  }
  NetworkPlan plan(parse_arch_string(text), 0);

  std::map<std::string, std::span<Real>> slots;
  for (auto& t : tensors_of(plan)) slots[t.name] = t.values;

  std::size_t count = 0;
  if (!(is >> word >> count) || word != "tensors") bad("missing tensor section");
  if (count != slots.size()) bad("tensor count does not match the architecture");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t size = 0;
    if (!(is >> name >> size)) bad("truncated tensor header");
    auto it = slots.find(name);
    if (it == slots.end()) bad("unexpected tensor " + name);
    if (it->second.size() != size) bad("tensor " + name + " has the wrong size");
    for (std::size_t j = 0; j < size; ++j) {
      std::string v;
      double x = 0;
      if (!(is >> v)) bad("truncated tensor " + name);
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc{} || p != v.data() + v.size()) bad("bad value in " + name);
      it->second[j] = static_cast<Real>(x);
    }
    slots.erase(it);
  }
  if (!(is >> word) || word != "end") bad("missing end marker");
  return plan;
}

NetworkPlan load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return load_checkpoint(is);
}

}  // namespace subm
