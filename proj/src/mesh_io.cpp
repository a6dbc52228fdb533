#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pinchlab/error.hpp"
#include "pinchlab/mesh.hpp"

namespace pinchlab {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Line reader that skips blank lines and '#' comments but keeps line numbers.
class LineReader {
public:
  explicit LineReader(const std::string& text) : in_(text) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  }
  int number() const { return number_; }

private:
  std::istringstream in_;
  int number_ = 0;
};

[[noreturn]] void fail(const std::string& what, int line) {
  throw FormatError(what + " at line " + std::to_string(line));
}

} // namespace

std::string to_off_string(const SimplicialSurface& m) {
  const auto& p = m.positions();
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "OFF\n" << m.num_vertices() << ' ' << m.num_faces() << ' ' << m.num_edges() << '\n';
  for (const Vec3& x : p) out << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  for (const Face& f : m.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  return out.str();
}

SimplicialSurface parse_off(const std::string& text) {
  LineReader reader(text);
  std::string line;
  if (!reader.next(line) || line.rfind("OFF", 0) != 0 || line.find_first_not_of(" \t", 3) != std::string::npos)
    fail("malformed header: expected \"OFF\"", reader.number());
  if (!reader.next(line)) fail("malformed header: missing counts", reader.number());
  long nv = -1, nf = -1, ne = -1;
  {
    std::istringstream counts(line);
    if (!(counts >> nv >> nf >> ne) || nv <= 0 || nf <= 0 || ne < 0)
      fail("malformed header: expected \"V F E\"", reader.number());
  }
  std::vector<Vec3> positions;
  positions.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(line)) fail("unexpected end of file in vertex list", reader.number());
    std::istringstream row(line);
    double x, y, z;
    if (!(row >> x >> y >> z)) fail("malformed vertex", reader.number());
    positions.emplace_back(x, y, z);
  }
  std::vector<Face> faces;
  faces.reserve(nf);
  for (long i = 0; i < nf; ++i) {
    if (!reader.next(line)) fail("unexpected end of file in face list", reader.number());
    std::istringstream row(line);
    int arity;
    if (!(row >> arity)) fail("malformed face", reader.number());
    if (arity != 3) fail("non-triangle face", reader.number());
    Face f;
    for (int q = 0; q < 3; ++q) {
      long idx;
      if (!(row >> idx)) fail("malformed face", reader.number());
      if (idx < 0 || idx >= nv)
        fail("vertex index " + std::to_string(idx) + " out of range [0, " + std::to_string(nv) + ")",
             reader.number());
      f[q] = static_cast<int>(idx);
    }
    faces.push_back(f);
  }
  return SimplicialSurface::embedded(std::move(positions), std::move(faces));
}

void save_off(const SimplicialSurface& m, const std::string& path) { write_file(path, to_off_string(m)); }

SimplicialSurface load_off(const std::string& path) { return parse_off(read_file(path)); }

std::string to_intrinsic_json(const SimplicialSurface& m) {
  nlohmann::json doc;
  doc["num_vertices"] = m.num_vertices();
  auto& faces = doc["faces"] = nlohmann::json::array();
  for (const Face& f : m.faces()) faces.push_back({f[0], f[1], f[2]});
  auto& lengths = doc["edge_lengths"] = nlohmann::json::array();
  for (int e = 0; e < m.num_edges(); ++e)
    lengths.push_back({m.edges()[e].a, m.edges()[e].b, m.edge_lengths()[e]});
  return doc.dump();
}

SimplicialSurface parse_intrinsic_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("intrinsic mesh JSON: ") + e.what());
  }
  if (!doc.contains("faces") || !doc.contains("edge_lengths"))
    throw FormatError("intrinsic mesh JSON needs \"faces\" and \"edge_lengths\"");
  std::vector<Face> faces;
  int max_index = -1;
  for (const auto& f : doc["faces"]) {
    if (!f.is_array() || f.size() != 3) throw FormatError("intrinsic mesh JSON: non-triangle face");
    Face t{f[0].get<int>(), f[1].get<int>(), f[2].get<int>()};
    for (int v : t) max_index = std::max(max_index, v);
    faces.push_back(t);
  }
  std::map<EdgeKey, double> lengths;
  for (const auto& e : doc["edge_lengths"]) {
    if (!e.is_array() || e.size() != 3) throw FormatError("intrinsic mesh JSON: bad edge entry");
    lengths[EdgeKey::of(e[0].get<int>(), e[1].get<int>())] = e[2].get<double>();
  }
  const int nv = doc.value("num_vertices", max_index + 1);
  return SimplicialSurface::intrinsic(nv, std::move(faces), lengths);
}

SimplicialSurface load_mesh(const std::string& path) {
  if (ends_with(path, ".json")) return parse_intrinsic_json(read_file(path));
  return load_off(path);
}

void save_mesh(const SimplicialSurface& m, const std::string& path) {
  if (ends_with(path, ".json")) {
    write_file(path, to_intrinsic_json(m));
  } else {
    save_off(m, path);
  }
}

} // namespace pinchlab
