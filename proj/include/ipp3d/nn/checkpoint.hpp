#pragma once

#include "ipp3d/errors.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/nn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

namespace ipp3d::nn {

// Layout: 8 magic bytes, u32 little-endian header length, JSON header
// [{name, shape, dtype, byte_offset}], then raw little-endian tensor data.
// byte_offset counts from the first byte after the header.
inline constexpr std::array<char, 8> kCheckpointMagic{'I', 'P', 'P', '3', 'D', 'N', '1', '\0'};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <typename U>
U get_le(const char* p) {
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U v;
  std::memcpy(&v, bytes.data(), sizeof(U));
  return v;
}

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, double>) return "f64";
  else return "f32";
}

}  // namespace detail

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void save_tensors(const NamedTensors<T>& tensors, const std::string& path) {
  nlohmann::json header = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, t] : tensors) {
    header.push_back({{"name", name}, {"shape", t.shape}, {"dtype", detail::dtype_name<T>()}, {"byte_offset", payload.size()}});
    for (T x : t.data) detail::put_le(payload, x);
  }
  const std::string h = header.dump();
  std::string blob(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le(blob, static_cast<std::uint32_t>(h.size()));
  blob += h;
  blob += payload;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed: " + path);
}

// Reads any checkpoint; f32 and f64 payloads are converted to T.
template <typename T>
NamedTensors<T> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 12 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), blob.begin())) {
    throw FormatError(path + ": bad magic");
  }
  const auto hlen = detail::get_le<std::uint32_t>(blob.data() + 8);
  if (blob.size() < 12 + static_cast<std::size_t>(hlen)) throw FormatError(path + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }
  const std::size_t base = 12 + hlen;
  NamedTensors<T> out;
  try {
    for (const auto& e : header) {
      Tensor<T> t(e.at("shape").get<std::vector<int>>());
      const std::string dtype = e.at("dtype");
      const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
      if (width == 0) throw FormatError(path + ": unknown dtype " + dtype);
      const std::size_t off = base + e.at("byte_offset").get<std::size_t>();
      if (off + width * t.numel() > blob.size()) throw FormatError(path + ": truncated tensor data");
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const char* p = blob.data() + off + i * width;
        t.data[i] = width == 8 ? static_cast<T>(detail::get_le<double>(p)) : static_cast<T>(detail::get_le<float>(p));
      }
      out.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header entry: " + e.what());
  }
  return out;
}

template <typename T>
NamedTensors<T> to_named(const PolicyParams<T>& params, const std::string& prefix = "") {
  NamedTensors<T> out;
  for (const auto& [name, v] : params.entries()) out.emplace_back(prefix + name, v.value());
  return out;
}

template <typename T>
void save_params(const PolicyParams<T>& params, const std::string& path) {
  save_tensors(to_named(params), path);
}

template <typename T = double>
PolicyParams<T> load_params(const std::string& path, const PolicyConfig& arch) {
  return PolicyParams<T>::from_tensors(arch, load_tensors<T>(path));
}

}  // namespace ipp3d::nn
