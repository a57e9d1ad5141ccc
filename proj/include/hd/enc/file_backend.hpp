#pragma once

#include <json.hpp>

#include "hd/enc/toy.hpp"
#include "hd/io/array_store.hpp"

// Adapter seam for externally trained encoders: weights travel in the named
// array container, metadata describes the architecture. Anything that loads
// here passes the same conformance checks as the built-in backends.

namespace hd {

inline constexpr const char* kEncoderFileFormat = "hd-encoder-v1";

template <class T>
void save_encoder_file(ToyConvEncoder<T>& enc, const std::string& path) {
  ArrayStore store;
  nlohmann::json meta;
  meta["format"] = kEncoderFileFormat;
  meta["profile"] =
      enc.profile() == ToyConvEncoder<T>::Profile::WideContext ? "wide-context" : "shallow-detail";
  meta["widths"] = enc.channel_widths();
  store.meta = meta.dump();
  for (ParamTensor<T>* p : enc.params()) store.add(p->name, p->value);
  store.save(path);
}

template <class T>
std::unique_ptr<ToyConvEncoder<T>> load_encoder_file(const std::string& name,
                                                     const std::string& path) {
  const ArrayStore store = ArrayStore::load(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(store.meta);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("'" + path + "': metadata is not valid JSON");
  }
  if (meta.value("format", "") != kEncoderFileFormat)
    throw std::runtime_error("'" + path + "': format is '" + meta.value("format", "(none)") +
                             "', expected '" + kEncoderFileFormat + "'");
  const std::string profile = meta.value("profile", "");
  if (profile != "wide-context" && profile != "shallow-detail")
    throw std::runtime_error("'" + path + "': unknown profile '" + profile + "'");
  std::array<int, kPyramidLevels> widths{};
  const auto w = meta.at("widths").get<std::vector<int>>();
  if (w.size() != kPyramidLevels)
    throw std::runtime_error("'" + path + "': widths must list " +
                             std::to_string(kPyramidLevels) + " channel counts");
  std::copy(w.begin(), w.end(), widths.begin());

  // imported weights are frozen by default
  auto enc = std::make_unique<ToyConvEncoder<T>>(
      name,
      profile == "wide-context" ? ToyConvEncoder<T>::Profile::WideContext
                                : ToyConvEncoder<T>::Profile::ShallowDetail,
      0, widths, false);
  for (ParamTensor<T>* p : enc->params()) {
    Tensor<T> v = store.at(p->name).template as<T>();
    if (!v.same_shape(p->value))
      throw std::runtime_error("'" + path + "': array '" + p->name + "' has shape " +
                               v.shape_str() + ", expected " + p->value.shape_str());
    p->value = std::move(v);
  }
  return enc;
}

}  // namespace hd
