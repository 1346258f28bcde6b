#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pathsearch/autodiff.hpp"

namespace pathsearch {

// Text checkpoint shared by every model. Values are hexfloats, so a
// write/read cycle is bit-exact:
//
//   pathsearch-checkpoint 1
//   model <kind>
//   attr <key> <value>          (zero or more)
//   tensors <N>
//   tensor <name> <rank> <dim>...
//   <hexfloat values, one line>
//   end
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> attributes;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  const std::string& attribute(const std::string& key) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pathsearch
