#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/rng.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/nn/tensor.hpp"

namespace fluxtft::nn {

/// A learnable tensor with its gradient slot and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  std::size_t size() const { return value.size(); }
};

/// Named parameters. Addresses of Params are stable for the store's lifetime.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param* add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) throw UsageError("ParamStore: duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(shape);
    p->m = Tensor(shape);
    p->v = Tensor(shape);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back().get();
  }

  /// Xavier-uniform initialization for a (fan_out x fan_in) weight.
  static void init_xavier(Param& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& w : p.value.values()) w = rng.uniform(-a, a);
  }

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return *params_[i]; }
  const Param& operator[](std::size_t i) const { return *params_[i]; }

  Param* find(const std::string& name) {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Param* find(const std::string& name) const {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
  }

  void reset_optimizer() {
    for (auto& p : params_) {
      p->m.fill(0.0);
      p->v.fill(0.0);
    }
    step = 0;
  }

  /// Flat copy of all values, in registration order.
  std::vector<double> snapshot() const {
    std::vector<double> out;
    out.reserve(total_values());
    for (const auto& p : params_) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
    return out;
  }

  void restore(const std::vector<double>& flat) {
    if (flat.size() != total_values()) throw UsageError("ParamStore::restore: size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p->size(), p->value.data());
      off += p->size();
    }
  }

  /// Manifest describing the binary layout.
  nlohmann::json manifest() const {
    nlohmann::json arr = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& p : params_) {
      arr.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
      offset += p->size();
    }
    return {{"format", "fluxtft-params"}, {"version", kVersion}, {"count", params_.size()}, {"values", offset}, {"params", arr}};
  }

  /// Binary layout: magic "FTPS", u32 version, u32 count, then per parameter
  /// u32 name length, name bytes, u32 rank, u64 dims; then every value as a
  /// little-endian IEEE-754 double in registration order.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write("FTPS", 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
      put_u32(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
      for (std::size_t d : p->value.shape()) put_u64(out, d);
    }
    for (const auto& p : params_) {
      for (double v : p->value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw DataError("write failed: " + path);
  }

  /// Loads values into already-registered parameters; names and shapes must match.
  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FTPS", 4) != 0) throw DataError(path + ": not a parameter file");
    if (get_u32(in) != kVersion) throw DataError(path + ": unsupported version");
    const std::uint32_t count = get_u32(in);
    if (count != params_.size()) throw DataError(path + ": parameter count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(get_u32(in), '\0');
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      std::vector<std::size_t> shape(get_u32(in));
      for (auto& d : shape) d = static_cast<std::size_t>(get_u64(in));
      if (!in || name != params_[i]->name || shape != params_[i]->value.shape()) {
        throw DataError(path + ": parameter '" + name + "' does not match the model");
      }
    }
    for (auto& p : params_) {
      for (auto& v : p->value.values()) v = std::bit_cast<double>(get_u64(in));
    }
    if (!in) throw DataError(path + ": truncated");
  }

  std::size_t step = 0;

 private:
  static constexpr std::uint32_t kVersion = 1;

  static void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  static void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
  static std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4] = {};
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace fluxtft::nn
