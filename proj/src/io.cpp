#include "alto/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace alto {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  return out;
}

[[noreturn]] void bad_line(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorKind::Io, "'" + path + "' line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<Vec3> read_xyz(const std::string& path) {
  auto in = open_in(path);
  std::vector<Vec3> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p[0])) continue;  // blank or comment-only line
    if (!(ss >> p[1] >> p[2])) bad_line(path, lineno, "expected 3 coordinates");
    std::string extra;
    if (ss >> extra) bad_line(path, lineno, "trailing content '" + extra + "'");
    pts.push_back(p);
  }
  return pts;
}

void write_xyz(const std::string& path, const std::vector<Vec3>& pts) {
  auto out = open_out(path);
  for (const Vec3& p : pts)
    out << fmt_double(p[0]) << ' ' << fmt_double(p[1]) << ' ' << fmt_double(p[2]) << '\n';
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

Mesh read_obj(const std::string& path) {
  auto in = open_in(path);
  Mesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p[0] >> p[1] >> p[2])) bad_line(path, lineno, "malformed vertex record");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<std::size_t, 3> tri;
      std::string ref;
      int count = 0;
      while (ss >> ref) {
        if (count >= 3) bad_line(path, lineno, "only triangular faces are supported");
        const std::string first = ref.substr(0, ref.find('/'));
        long idx = 0;
        try {
          idx = std::stol(first);
        } catch (const std::exception&) {
          bad_line(path, lineno, "malformed face index '" + ref + "'");
        }
        if (idx < 1 || static_cast<std::size_t>(idx) > mesh.vertices.size())
          bad_line(path, lineno, "face index out of range");
        tri[count++] = static_cast<std::size_t>(idx - 1);
      }
      if (count != 3) bad_line(path, lineno, "only triangular faces are supported");
      mesh.triangles.push_back(tri);
    }
    // other record types (vn, vt, o, s, g, usemtl, ...) are ignored
  }
  return mesh;
}

void write_obj(const std::string& path, const Mesh& mesh) {
  auto out = open_out(path);
  for (const Vec3& v : mesh.vertices)
    out << "v " << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << ' ' << fmt_double(v[2]) << '\n';
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

void write_loss_csv(const std::string& path, const std::vector<double>& sum_loss,
                    const std::vector<double>& mean_loss, std::size_t start_step) {
  require(sum_loss.size() == mean_loss.size(), ErrorKind::Contract,
          "loss log: history lengths differ");
  auto out = open_out(path);
  out << "step,sum_loss,mean_loss\n";
  for (std::size_t i = 0; i < sum_loss.size(); ++i)
    out << start_step + i + 1 << ',' << fmt_double(sum_loss[i]) << ',' << fmt_double(mean_loss[i])
        << '\n';
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

std::vector<int> read_labels(const std::string& path) {
  auto in = open_in(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    int v;
    if (!(ss >> v)) continue;
    if (v != 0 && v != 1) bad_line(path, lineno, "labels must be 0 or 1");
    labels.push_back(v);
  }
  return labels;
}

void write_labels(const std::string& path, const std::vector<double>& labels) {
  auto out = open_out(path);
  for (double v : labels) {
    require(v == 0.0 || v == 1.0, ErrorKind::Contract, "labels must be 0 or 1");
    out << (v == 1.0 ? '1' : '0') << '\n';
  }
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace alto
