#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "subm/net.hpp"

namespace subm {
namespace {

struct Line {
  int number = 0;
  std::string keyword;
  std::vector<std::string> positional;
  std::map<std::string, std::string> named;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + msg);
}

Line tokenize(const std::string& text, int number) {
  Line l;
  l.number = number;
  std::istringstream ss(text);
  std::string tok;
  ss >> l.keyword;
  while (ss >> tok) {
    if (auto eq = tok.find('='); eq != std::string::npos) {
      l.named[tok.substr(0, eq)] = tok.substr(eq + 1);
    } else {
      l.positional.push_back(tok);
    }
  }
  return l;
}

int to_int(const Line& l, const std::string& s, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    fail(l.number, std::string("bad integer for ") + what + ": '" + s + "'");
  }
  return v;
}

double to_real(const Line& l, const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(l.number, std::string("bad number for ") + what + ": '" + s + "'");
  }
}

int positional_int(const Line& l, std::size_t i, const char* what) {
  if (i >= l.positional.size()) fail(l.number, std::string("missing ") + what);
  return to_int(l, l.positional[i], what);
}

int named_int(const Line& l, const std::string& key, int fallback) {
  auto it = l.named.find(key);
  return it == l.named.end() ? fallback : to_int(l, it->second, key.c_str());
}

void expect_keys(const Line& l, std::initializer_list<const char*> allowed, std::size_t max_pos) {
  for (const auto& [k, v] : l.named) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(l.number, "unknown option '" + k + "' for " + l.keyword);
  }
  if (l.positional.size() > max_pos) fail(l.number, "too many arguments for " + l.keyword);
}

void set_pool(const Line& l, BlockConfig& b, int fallback) {
  const int pool = named_int(l, "pool", fallback);
  if (pool != 0 && pool != 2 && pool != 3) fail(l.number, "pool must be 0, 2 or 3");
  b.pool_f = pool;
  b.pool_s = 2;
}

}  // namespace

int ArchConfig::input_planes() const {
  if (input) return input->planes;
  return blocks.empty() ? 0 : blocks.front().n_in;
}

int ArchConfig::output_planes() const {
  return blocks.empty() ? input_planes() : block_out_planes(blocks.back());
}

ArchConfig parse_arch(std::istream& is) {
  ArchConfig arch;
  std::string raw;
  int number = 0;
  int planes = 0;  // running plane count, 0 until known
  bool closed = false;

  while (std::getline(is, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    Line l = tokenize(raw, number);
    if (l.keyword.empty()) continue;
    if (closed) fail(number, "nothing may follow the classifier");

    auto chain = [&](BlockConfig& b, bool explicit_in) {
      if (explicit_in) {
        if (planes != 0 && b.n_in != planes) {
          throw Error(ErrorCode::kPlaneMismatch,
                      "line " + std::to_string(number) + ": block expects " +
                          std::to_string(b.n_in) + " input planes, previous stage emits " +
                          std::to_string(planes));
        }
      } else {
        if (planes == 0) fail(number, l.keyword + " needs a known input plane count");
        b.n_in = planes;
      }
      try {
        b.validate();
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kPlaneMismatch) throw;
        fail(number, e.what());
      }
      planes = block_out_planes(b);
      arch.blocks.push_back(b);
    };

    const std::string& k = l.keyword;
    if (k == "input") {
      expect_keys(l, {"d", "size", "m"}, 0);
      if (arch.input || !arch.blocks.empty()) fail(number, "input must come first, once");
      InputSpec in;
      in.dim = named_int(l, "d", 2);
      in.size = named_int(l, "size", 0);
      in.planes = named_int(l, "m", 1);
      if (in.dim < 1 || in.dim > kMaxDim) fail(number, "d must be 1..4");
      if (in.size < 1) fail(number, "size must be >= 1");
      if (in.planes < 1) fail(number, "m must be >= 1");
      arch.input = in;
      planes = in.planes;
    } else if (k == "vgg" || k == "resnet" || k == "resnet_down") {
      expect_keys(l, {"pool"}, 2);
      BlockConfig b;
      b.kind = k == "vgg" ? BlockKind::kVgg
               : k == "resnet" ? BlockKind::kResNetSame
                               : BlockKind::kResNetDown;
      b.n_in = positional_int(l, 0, "n_in");
      b.n_out = positional_int(l, 1, "n_out");
      if (k == "vgg") {
        set_pool(l, b, 2);
      } else if (l.named.count("pool")) {
        fail(number, "pool is only valid for vgg blocks");
      }
      chain(b, true);
    } else if (k == "dense") {
      expect_keys(l, {"g", "n"}, 1);
      BlockConfig b;
      b.kind = BlockKind::kDenseSame;
      b.n_in = positional_int(l, 0, "n_in");
      b.growth = named_int(l, "g", 16);
      b.units = named_int(l, "n", 2);
      chain(b, true);
    } else if (k == "transition") {
      expect_keys(l, {"pool", "f"}, 1);
      BlockConfig b;
      b.kind = BlockKind::kDenseDown;
      b.compress = l.positional.empty() ? 1.0 : to_real(l, l.positional[0], "compress");
      b.f = named_int(l, "f", 1);
      set_pool(l, b, 2);
      if (b.pool_f == 0) fail(number, "transition needs a pool");
      chain(b, false);
    } else if (k == "vsc" || k == "sc") {
      expect_keys(l, {"f", "s"}, 2);
      BlockConfig b;
      b.kind = BlockKind::kConv;
      b.conv = k == "vsc" ? ConvKind::VSC : ConvKind::SC;
      b.n_in = positional_int(l, 0, "m");
      b.n_out = positional_int(l, 1, "n");
      b.f = named_int(l, "f", 3);
      b.s = named_int(l, "s", k == "vsc" ? 1 : 2);
      try {
        ConvSpec{.kind = b.conv, .m = b.n_in, .n = b.n_out, .f = b.f, .s = b.s}.validate();
      } catch (const Error& e) {
        fail(number, e.what());
      }
      chain(b, true);
    } else if (k == "mp" || k == "ap") {
      expect_keys(l, {"f", "s"}, 0);
      BlockConfig b;
      b.kind = BlockKind::kPool;
      b.conv = k == "mp" ? ConvKind::MP : ConvKind::AP;
      b.f = named_int(l, "f", 2);
      b.s = named_int(l, "s", b.f);
      if (b.f < 1 || b.s < 1) fail(number, "pool f and s must be >= 1");
      chain(b, false);
    } else if (k == "bnrelu") {
      expect_keys(l, {}, 1);
      BlockConfig b;
      b.kind = BlockKind::kBnRelu;
      if (!l.positional.empty()) {
        b.n_in = positional_int(l, 0, "n");
        chain(b, true);
      } else {
        chain(b, false);
      }
    } else if (k == "classifier") {
      expect_keys(l, {}, 1);
      arch.classes = positional_int(l, 0, "classes");
      if (arch.classes < 2) fail(number, "classifier needs >= 2 classes");
      if (planes == 0) fail(number, "classifier needs a known input plane count");
      closed = true;
    } else {
      fail(number, "unknown block '" + k + "'");
    }
  }
  if (arch.blocks.empty() && arch.classes == 0) {
    throw Error(ErrorCode::kParseError, "architecture is empty");
  }
  return arch;
}

ArchConfig parse_arch_string(const std::string& text) {
  std::istringstream is(text);
  return parse_arch(is);
}

ArchConfig load_arch_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return parse_arch(is);
}

std::string format_arch(const ArchConfig& arch) {
  std::ostringstream os;
  os.precision(17);
  if (arch.input) {
    os << "input d=" << arch.input->dim << " size=" << arch.input->size
       << " m=" << arch.input->planes << '\n';
  }
  for (const auto& b : arch.blocks) {
    switch (b.kind) {
      case BlockKind::kVgg:
        os << "vgg " << b.n_in << ' ' << b.n_out << " pool=" << b.pool_f << '\n';
        break;
      case BlockKind::kResNetSame:
        os << "resnet " << b.n_in << ' ' << b.n_out << '\n';
        break;
      case BlockKind::kResNetDown:
        os << "resnet_down " << b.n_in << ' ' << b.n_out << '\n';
        break;
      case BlockKind::kDenseSame:
        os << "dense " << b.n_in << " g=" << b.growth << " n=" << b.units << '\n';
        break;
      case BlockKind::kDenseDown:
        os << "transition " << b.compress << " pool=" << b.pool_f << " f=" << b.f << '\n';
        break;
      case BlockKind::kConv:
        os << (b.conv == ConvKind::SC ? "sc " : "vsc ") << b.n_in << ' ' << b.n_out
           << " f=" << b.f << " s=" << b.s << '\n';
        break;
      case BlockKind::kPool:
        os << (b.conv == ConvKind::MP ? "mp" : "ap") << " f=" << b.f << " s=" << b.s << '\n';
        break;
      case BlockKind::kBnRelu:
        os << "bnrelu " << b.n_in << '\n';
        break;
    }
  }
  if (arch.classes > 0) os << "classifier " << arch.classes << '\n';
  return os.str();
}

}  // namespace subm
