// Copyright (c) 2026 The MMViT Kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmvit/tensor.hpp"

namespace mmvit {

/// Insertion-ordered map of dotted parameter names to tensors.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, Tensor<T> t) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor<T>& get(const std::string& name) const { return entries_[lookup(name)].second; }
  Tensor<T>& get(const std::string& name) { return entries_[lookup(name)].second; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::int64_t total_numel() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& [_, t] : entries_) t.set_requires_grad(on);
  }
  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }
  void clear_grad() {
    for (auto& [_, t] : entries_) t.clear_grad();
  }

  /// Deep copy with fresh storage (no shared nodes).
  ParamStore clone() const {
    ParamStore out;
    for (const auto& [name, t] : entries_) {
      Tensor<T> c = t.detach();
      c.set_requires_grad(t.requires_grad());
      out.add(name, std::move(c));
    }
    return out;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : entries_) {
      Tensor<U> c = t.template cast<U>();
      c.set_requires_grad(t.requires_grad());
      out.add(name, std::move(c));
    }
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mmvit
