#include "meshdiff/obj_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "meshdiff/error.hpp"

namespace meshdiff {

namespace {

struct PendingCorner {
  long long index;  // resolved 1-based index, possibly out of range
  std::size_t line;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(line, "malformed number '" + std::string(tok) + "'");
  return value;
}

long long parse_index(std::string_view tok, std::size_t line) {
  const std::string_view head = tok.substr(0, tok.find('/'));
  long long value = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (head.empty() || ec != std::errc{} || ptr != head.data() + head.size())
    throw ParseError(line, "malformed face index '" + std::string(tok) + "'");
  return value;
}

}  // namespace

Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  std::vector<std::array<PendingCorner, 3>> pending;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;

    if (tokens[0] == "v") {
      if (tokens.size() < 4) throw ParseError(line_no, "vertex needs three coordinates");
      mesh.vertices.push_back(
          {parse_real(tokens[1], line_no), parse_real(tokens[2], line_no), parse_real(tokens[3], line_no)});
    } else if (tokens[0] == "f") {
      if (tokens.size() < 4) throw ParseError(line_no, "face needs at least three vertices");
      std::vector<PendingCorner> corners;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        long long idx = parse_index(tokens[i], line_no);
        if (idx < 0) idx = static_cast<long long>(mesh.vertices.size()) + idx + 1;
        corners.push_back({idx, line_no});
      }
      for (std::size_t i = 1; i + 1 < corners.size(); ++i) pending.push_back({corners[0], corners[i], corners[i + 1]});
    }
    if (end == text.size()) break;
  }

  const auto n = static_cast<long long>(mesh.vertices.size());
  for (const auto& tri : pending) {
    Face f{};
    for (int k = 0; k < 3; ++k) {
      if (tri[k].index < 1 || tri[k].index > n)
        throw StructuralError(tri[k].line, "face index " + std::to_string(tri[k].index) + " out of range (" +
                                               std::to_string(n) + " vertices)");
      f[k] = static_cast<std::uint32_t>(tri[k].index - 1);
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    mesh.faces.push_back(f);
  }
  if (mesh.faces.empty()) throw EmptyMeshError("OBJ contains no faces");
  return mesh;
}

std::string write_obj(const Mesh& mesh) {
  std::string out;
  char buf[64];
  for (const Vec3& v : mesh.vertices) {
    out += 'v';
    for (int a = 0; a < 3; ++a) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v[a]);
      out += ' ';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  for (const Face& f : mesh.faces) {
    out += 'f';
    for (std::uint32_t i : f) {
      out += ' ';
      out += std::to_string(i + 1);
    }
    out += '\n';
  }
  return out;
}

Mesh read_obj_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str());
}

void write_obj_file(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << write_obj(mesh);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace meshdiff
