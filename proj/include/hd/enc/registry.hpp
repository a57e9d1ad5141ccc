#pragma once

#include <functional>
#include <map>

#include "hd/enc/toy.hpp"

// Backend registry: config files name encoders, this resolves the names.

namespace hd {

template <class T>
class EncoderRegistry {
 public:
  using Factory = std::function<std::unique_ptr<EncoderBackend<T>>(std::uint64_t seed)>;

  void add(const std::string& name, Factory f) {
    if (factories_.count(name))
      throw std::invalid_argument("encoder registry: duplicate name '" + name + "'");
    factories_[name] = std::move(f);
  }

  std::unique_ptr<EncoderBackend<T>> create(const std::string& name, std::uint64_t seed) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) {
      std::string known;
      for (const auto& [k, v] : factories_) known += (known.empty() ? "" : ", ") + k;
      throw std::invalid_argument("unknown encoder '" + name + "' (known: " + known + ")");
    }
    return it->second(seed);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : factories_) out.push_back(k);
    return out;
  }

  // Process-wide instance with the toy profiles pre-registered.
  static EncoderRegistry& global() {
    static EncoderRegistry reg = [] {
      EncoderRegistry r;
      r.add("toy-wide", [](std::uint64_t seed) {
        return std::make_unique<ToyConvEncoder<T>>("toy-wide",
                                                   ToyConvEncoder<T>::Profile::WideContext, seed);
      });
      r.add("toy-local", [](std::uint64_t seed) {
        return std::make_unique<ToyConvEncoder<T>>(
            "toy-local", ToyConvEncoder<T>::Profile::ShallowDetail, seed);
      });
      return r;
    }();
    return reg;
  }

 private:
  std::map<std::string, Factory> factories_;
};

}  // namespace hd
