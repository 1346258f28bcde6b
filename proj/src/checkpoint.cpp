#include "pathsearch/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "pathsearch/errors.hpp"

namespace pathsearch {

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::attribute(const std::string& key) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) throw FormatError("checkpoint has no attribute '" + key + "'");
  return it->second;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << "pathsearch-checkpoint 1\n";
  out << "model " << ckpt.kind << '\n';
  for (const auto& [k, v] : ckpt.attributes) out << "attr " << k << ' ' << v << '\n';
  out << "tensors " << ckpt.tensors.size() << '\n';
  out << std::hexfloat;
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << ' ' << t.shape().size();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << t[i];
    out << '\n';
  }
  out << std::defaultfloat;
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string tok;
  int version = 0;
  if (!(in >> tok >> version) || tok != "pathsearch-checkpoint" || version != 1) {
    throw FormatError("not a pathsearch checkpoint");
  }
  Checkpoint ckpt;
  if (!(in >> tok >> ckpt.kind) || tok != "model") throw FormatError("checkpoint missing model line");
  std::size_t count = 0;
  while (in >> tok) {
    if (tok == "attr") {
      std::string k, v;
      if (!(in >> k >> v)) throw FormatError("bad attr line");
      ckpt.attributes[k] = v;
    } else if (tok == "tensors") {
      if (!(in >> count)) throw FormatError("bad tensor count");
      break;
    } else {
      throw FormatError("unexpected token '" + tok + "' in checkpoint");
    }
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> tok >> name >> rank) || tok != "tensor" || rank > 2) throw FormatError("bad tensor header");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      if (!(in >> d)) throw FormatError("bad tensor dims");
      n *= d;
    }
    std::vector<double> data(n);
    for (double& v : data) {
      if (!(in >> tok)) throw FormatError("truncated tensor data");
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw FormatError("bad number '" + tok + "'");
    }
    ckpt.tensors.emplace_back(name, Tensor(shape, std::move(data)));
  }
  if (!(in >> tok) || tok != "end") throw FormatError("checkpoint missing end marker");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace pathsearch
