#include "molgym/xyz.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace molgym {

std::string to_xyz(const Canvas& canvas, const ElementTable& table,
                   const std::string& comment) {
  std::string out = std::to_string(canvas.size()) + "\n" + comment + "\n";
  char line[160];
  for (const Atom& a : canvas.atoms) {
    std::snprintf(line, sizeof(line), "%s %.10f %.10f %.10f\n",
                  table.info(a.element).symbol.c_str(), a.position.x, a.position.y,
                  a.position.z);
    out += line;
  }
  return out;
}

void write_xyz(const std::string& path, const Canvas& canvas, const ElementTable& table,
               const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_xyz: cannot open " + path);
  out << to_xyz(canvas, table, comment);
}

XyzFile parse_xyz(const std::string& text, const ElementTable& table) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_xyz: empty input");
  int count = 0;
  try {
    count = std::stoi(line);
  } catch (...) {
    throw std::runtime_error("parse_xyz: bad atom count line");
  }
  XyzFile file;
  if (!std::getline(in, file.comment)) throw std::runtime_error("parse_xyz: missing comment");
  for (int i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("parse_xyz: truncated atom list");
    std::istringstream ls(line);
    std::string sym;
    Vec3 pos;
    if (!(ls >> sym >> pos.x >> pos.y >> pos.z)) {
      throw std::runtime_error("parse_xyz: bad atom line " + std::to_string(i + 3));
    }
    file.canvas.atoms.push_back({table.id(sym), pos});
  }
  return file;
}

XyzFile read_xyz(const std::string& path, const ElementTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_xyz: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_xyz(ss.str(), table);
}

}  // namespace molgym
