#include "molgym/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace molgym {

std::string checkpoint_to_string(const nn::ParamStore& params) {
  std::string out = "molgym-checkpoint v1\n";
  char buf[64];
  for (const auto& [name, tensor] : params.all()) {
    out += "param " + name + " " + std::to_string(tensor.ndim());
    for (int d : tensor.shape) out += " " + std::to_string(d);
    out += "\n";
    for (long i = 0; i < tensor.numel(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", tensor[i]);
      out += buf;
      out += (i + 1 == tensor.numel()) ? "\n" : " ";
    }
    if (tensor.numel() == 0) out += "\n";
  }
  return out;
}

void save_checkpoint(const std::string& path, const nn::ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << checkpoint_to_string(params);
}

void load_checkpoint_from_string(const std::string& text, nn::ParamStore& params) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  if (header != "molgym-checkpoint v1") {
    throw std::runtime_error("load_checkpoint: unrecognized header '" + header + "'");
  }
  std::size_t loaded = 0;
  std::string tok;
  while (in >> tok) {
    if (tok != "param") throw std::runtime_error("load_checkpoint: expected 'param'");
    std::string name;
    int ndim = 0;
    in >> name >> ndim;
    std::vector<int> shape(static_cast<std::size_t>(ndim));
    for (int& d : shape) in >> d;
    if (!params.contains(name)) {
      throw std::runtime_error("load_checkpoint: unknown parameter " + name);
    }
    Tensor& dst = params.get(name);
    if (dst.shape != shape) {
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    for (long i = 0; i < dst.numel(); ++i) {
      if (!(in >> dst[i])) {
        throw std::runtime_error("load_checkpoint: truncated values for " + name);
      }
    }
    ++loaded;
  }
  if (loaded != params.all().size()) {
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  }
}

void load_checkpoint(const std::string& path, nn::ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  load_checkpoint_from_string(ss.str(), params);
}

}  // namespace molgym
