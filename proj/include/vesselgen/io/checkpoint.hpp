#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   8 bytes   magic "VGCKPT\r\n"
//   u32       format version (1)
//   u64       metadata length N, then N bytes of UTF-8 JSON
//   u32       tensor count
//   per tensor (sorted by name):
//     u32 name length, name bytes
//     u32 rank, rank x u64 dims
//     product(dims) x f32 values
//
// Tensor names are "param/<name>", "adam.m/<name>" and "adam.v/<name>". The
// metadata carries the run config, epoch, loss history, optimizer step and
// hyperparameters, and the serialized RNG state, so a checkpoint is enough
// to resume training or to sample without any other file.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vesselgen/io/config.hpp"
#include "vesselgen/train.hpp"

namespace vesselgen::io {

inline constexpr std::array<char, 8> checkpoint_magic{'V', 'G', 'C', 'K', 'P', 'T', '\r', '\n'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  RunConfig config;
  std::size_t epoch = 0;
  TrainState state;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return to_json(a.config) == to_json(b.config) && a.epoch == b.epoch &&
           a.state.params == b.state.params && a.state.optimizer == b.state.optimizer &&
           a.state.loss_history == b.state.loss_history && a.state.rng == b.state.rng;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void bytes(const std::string& s) { out_.write(s.data(), std::streamsize(s.size())); }
  void tensor(const std::string& name, const Tensor& t) {
    pod(std::uint32_t(name.size()));
    bytes(name);
    pod(std::uint32_t(t.rank()));
    for (auto d : t.shape()) pod(std::uint64_t(d));
    out_.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(float)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("truncated file");
    return v;
  }
  std::string bytes(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 32)) fail("implausible length field");
    std::string s(n, '\0');
    in_.read(s.data(), std::streamsize(n));
    if (!in_) fail("truncated file");
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    auto name = bytes(pod<std::uint32_t>());
    const auto rank = pod<std::uint32_t>();
    if (rank == 0 || rank > 8) fail("bad rank for tensor " + name);
    Shape shape(rank);
    for (auto& d : shape) d = std::size_t(pod<std::uint64_t>());
    const auto n = shape_size(shape);
    if (n == 0 || n > (std::size_t{1} << 30)) fail("bad shape for tensor " + name);
    std::vector<float> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
    if (!in_) fail("truncated data for tensor " + name);
    return {std::move(name), Tensor(std::move(shape), std::move(v))};
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("corrupt checkpoint " + origin_ + ": " + what);
  }

 private:
  std::istream& in_;
  std::string origin_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  std::ostringstream rng_state;
  rng_state << ck.state.rng;
  const auto& adam = ck.state.optimizer.hyper;
  json meta = {
      {"config", to_json(ck.config)},
      {"epoch", ck.epoch},
      {"loss_history", ck.state.loss_history},
      {"optimizer",
       {{"step", ck.state.optimizer.step},
        {"learning_rate", adam.learning_rate},
        {"beta1", adam.beta1},
        {"beta2", adam.beta2},
        {"epsilon", adam.epsilon}}},
      {"rng_state", rng_state.str()},
  };
  const std::string meta_text = meta.dump();
  detail::Writer w(out);
  out.write(checkpoint_magic.data(), checkpoint_magic.size());
  w.pod(checkpoint_version);
  w.pod(std::uint64_t(meta_text.size()));
  w.bytes(meta_text);
  const auto& p = ck.state.params;
  w.pod(std::uint32_t(3 * p.size()));
  // "adam.m/" < "adam.v/" < "param/", so this order is sorted by full name.
  for (const auto& [name, t] : ck.state.optimizer.first_moment) w.tensor("adam.m/" + name, t);
  for (const auto& [name, t] : ck.state.optimizer.second_moment) w.tensor("adam.v/" + name, t);
  for (const auto& [name, t] : p) w.tensor("param/" + name, t);
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& origin = "<stream>") {
  detail::Reader r(in, origin);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != checkpoint_magic) r.fail("bad magic (not a vesselgen checkpoint)");
  const auto version = r.pod<std::uint32_t>();
  if (version != checkpoint_version)
    r.fail("unsupported format version " + std::to_string(version));
  const auto meta_text = r.bytes(r.pod<std::uint64_t>());
  Checkpoint ck;
  try {
    const auto meta = json::parse(meta_text);
    ck.config = config_from_json(meta.at("config"));
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.state.loss_history = meta.at("loss_history").get<std::vector<double>>();
    const auto& opt = meta.at("optimizer");
    ck.state.optimizer.step = opt.at("step").get<std::uint64_t>();
    ck.state.optimizer.hyper = {opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(),
                                opt.at("beta2").get<double>(), opt.at("epsilon").get<double>()};
    std::istringstream rng_state(meta.at("rng_state").get<std::string>());
    rng_state >> ck.state.rng;
    if (!rng_state) r.fail("bad rng state");
  } catch (const json::exception& e) {
    r.fail(std::string("bad metadata: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(std::string("bad embedded config: ") + e.what());
  }
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    const auto slash = name.find('/');
    const auto kind = name.substr(0, slash), key = name.substr(slash + 1);
    DenoiserParams* target = kind == "param"    ? &ck.state.params
                             : kind == "adam.m" ? &ck.state.optimizer.first_moment
                             : kind == "adam.v" ? &ck.state.optimizer.second_moment
                                                : nullptr;
    if (slash == std::string::npos || !target) r.fail("unknown tensor " + name);
    if (!target->emplace(key, std::move(t)).second) r.fail("duplicate tensor " + name);
  }
  const auto expected = parameter_shapes(ck.config.denoiser);
  if (ck.state.params.size() != expected.size()) r.fail("parameter set does not match config");
  for (const auto& [name, shape] : expected) {
    for (const auto* set : {&ck.state.params, &ck.state.optimizer.first_moment,
                            &ck.state.optimizer.second_moment}) {
      const auto it = set->find(name);
      if (it == set->end() || it->second.shape() != shape) r.fail("missing or misshapen tensor " + name);
    }
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  // Write to a sibling temp file, then rename, so an existing checkpoint is
  // never left half-written.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    write_checkpoint(out, ck);
    out.flush();
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace vesselgen::io
