#include "toat/params.hpp"

#include <stdexcept>

namespace toat {

Tensor& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  auto [it, inserted] = entries_.emplace(name, Param{std::move(value), trainable});
  if (!inserted) throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
  return it->second.value;
}

Param& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::logic_error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::logic_error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

}  // namespace toat
