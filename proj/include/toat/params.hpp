#pragma once

#include <map>
#include <string>

#include "toat/tensor.hpp"

namespace toat {

struct Param {
  Tensor value;
  bool trainable = true;
};

// Named parameter tensors with deterministic (sorted) iteration order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value, bool trainable = true);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::map<std::string, Param>& entries() { return entries_; }
  const std::map<std::string, Param>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Param> entries_;
};

}  // namespace toat
