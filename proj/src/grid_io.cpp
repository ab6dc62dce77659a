#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "subm/grid.hpp"

namespace subm {
namespace {

std::string format_real(Real x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

struct Header {
  int dim = 0;
  std::vector<std::int32_t> size;
  std::size_t m = 0;
};

Header parse_header(const std::string& line) {
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::kHeaderMismatch, why + ": '" + line + "'");
  };
  if (line.empty() || line[0] != '#') throw fail("missing header");
  Header h;
  bool have_d = false, have_size = false, have_m = false;
  for (auto tok : split_ws(std::string_view(line).substr(1))) {
    auto eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = tok.substr(0, eq);
    auto val = tok.substr(eq + 1);
    if (key == "d") {
      if (!parse_number(val, h.dim)) throw fail("bad d");
      have_d = true;
    } else if (key == "size") {
      std::size_t start = 0;
      while (start <= val.size()) {
        auto comma = val.find(',', start);
        auto part = val.substr(start, comma == std::string_view::npos ? val.npos : comma - start);
        std::int32_t v = 0;
        if (!parse_number(part, v)) throw fail("bad size");
        h.size.push_back(v);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      have_size = true;
    } else if (key == "m") {
      if (!parse_number(val, h.m)) throw fail("bad m");
      have_m = true;
    }
  }
  if (!have_d || !have_size || !have_m) throw fail("header needs d, size and m");
  if (h.dim < 1 || h.dim > kMaxDim || h.size.size() != static_cast<std::size_t>(h.dim)) {
    throw fail("size list does not match d");
  }
  return h;
}

}  // namespace

void write_grid_text(std::ostream& os, const SparseGrid& g) {
  const auto& shape = g.shape();
  os << "# d=" << shape.dim << " size=";
  for (int k = 0; k < shape.dim; ++k) {
    if (k) os << ',';
    os << shape.size[static_cast<std::size_t>(k)];
  }
  os << " m=" << g.num_features() << '\n';
  for (std::size_t r = 0; r < g.active_count(); ++r) {
    const auto& c = g.sites().coord(r);
    os << c.batch;
    for (int k = 0; k < shape.dim; ++k) os << ' ' << c.spatial[static_cast<std::size_t>(k)];
    os << " |";
    for (Real x : g.features().row(r)) os << ' ' << format_real(x);
    os << '\n';
  }
}

SparseGrid read_grid_text(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::kHeaderMismatch, "empty input");
  Header h = parse_header(line);

  std::vector<Point> points;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    auto parse_error = [&](const std::string& why) {
      return Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + why);
    };
    auto bar = std::find(toks.begin(), toks.end(), std::string_view("|"));
    if (bar == toks.end()) throw parse_error("missing '|' separator");
    auto n_coord = static_cast<std::size_t>(bar - toks.begin());
    auto n_feat = static_cast<std::size_t>(toks.end() - bar - 1);
    if (n_coord != static_cast<std::size_t>(h.dim) + 1) {
      throw parse_error("expected batch plus " + std::to_string(h.dim) + " coordinates, got " +
                        std::to_string(n_coord) + " fields");
    }
    if (n_feat != h.m) {
      throw parse_error("expected " + std::to_string(h.m) + " features, got " +
                        std::to_string(n_feat));
    }
    Point p;
    if (!parse_number(toks[0], p.coord.batch)) throw parse_error("bad batch index");
    for (int k = 0; k < h.dim; ++k) {
      if (!parse_number(toks[static_cast<std::size_t>(k) + 1], p.coord.spatial[static_cast<std::size_t>(k)])) {
        throw parse_error("bad coordinate");
      }
    }
    p.features.resize(h.m);
    for (std::size_t j = 0; j < h.m; ++j) {
      if (!parse_number(*(bar + 1 + static_cast<std::ptrdiff_t>(j)), p.features[j])) {
        throw parse_error("bad feature value");
      }
    }
    points.push_back(std::move(p));
  }
  return grid_from_points(points, h.size, h.m);
}

void save_grid_file(const SparseGrid& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  write_grid_text(os, g);
  if (!os) throw Error(ErrorCode::kIoError, "write failed: " + path);
}

SparseGrid load_grid_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return read_grid_text(is);
}

}  // namespace subm
