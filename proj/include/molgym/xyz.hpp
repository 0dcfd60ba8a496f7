#pragma once

#include <string>

#include "molgym/oracle.hpp"

namespace molgym {

/// XYZ writer: first line atom count, second line comment
/// (`energy=<E> return=<R>` when written by the runner), then
/// `SYMBOL x y z` in Angstrom. Fixed formatting keeps outputs byte-stable.
std::string to_xyz(const Canvas& canvas, const ElementTable& table,
                   const std::string& comment = "");
void write_xyz(const std::string& path, const Canvas& canvas, const ElementTable& table,
               const std::string& comment = "");

struct XyzFile {
  Canvas canvas;
  std::string comment;
};

XyzFile read_xyz(const std::string& path, const ElementTable& table);
XyzFile parse_xyz(const std::string& text, const ElementTable& table);

}  // namespace molgym
