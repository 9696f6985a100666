#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsgfa/networks.hpp"

namespace fsgfa {

inline constexpr char kCheckpointMagic[6] = {'F', 'S', 'G', 'F', 'A', '1'};

enum class CheckpointSubset : std::uint8_t { full = 0, test = 1 };

/// Momentum buffers plus the last finished epoch, appended to training
/// checkpoints so runs can resume mid-schedule.
struct TrainStateData {
  int epoch = 0;
  std::vector<std::pair<std::string, Tensor<float>>> momentum;
};

namespace detail {

struct Writer {
  std::ofstream f;
  explicit Writer(const std::string& path) : f(path, std::ios::binary | std::ios::trunc) {
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
};

struct Reader {
  std::ifstream f;
  std::string path;
  explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
    if (!f) throw std::runtime_error("checkpoint: cannot open " + p);
  }
  void bytes(void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f.gcount()) != n)
      throw std::runtime_error("checkpoint: truncated file " + path);
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw std::runtime_error("checkpoint: implausible string in " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  bool at_eof() {
    f.peek();
    return f.eof();
  }
};

template <class T>
void write_record(Writer& w, std::uint8_t kind, const std::string& name, const Tensor<T>& t) {
  w.u8(kind);
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape) w.u64(static_cast<std::uint64_t>(e));
  for (std::int64_t i = 0; i < t.numel(); ++i) w.f32(static_cast<float>(t[i]));
}

struct RawRecord {
  std::uint8_t kind;
  std::string name;
  Tensor<float> value;
};

inline RawRecord read_record(Reader& r) {
  RawRecord rec;
  rec.kind = r.u8();
  rec.name = r.str();
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw std::runtime_error("checkpoint: implausible rank in " + r.path);
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u64()));
  rec.value = Tensor<float>(shape);
  for (std::int64_t i = 0; i < rec.value.numel(); ++i) rec.value[i] = r.f32();
  return rec;
}

inline void write_config(Writer& w, const NetConfig& c) {
  w.str(c.name);
  const std::int64_t fields[13] = {
      c.input_size,           c.stem_channels,        c.stage_mid_channels[0],
      c.stage_mid_channels[1], c.stage_mid_channels[2], c.stage_mid_channels[3],
      c.stage_depths[0],      c.stage_depths[1],      c.stage_depths[2],
      c.stage_depths[3],      c.embed_channels,       c.num_classes,
      c.decode_size};
  for (std::int64_t v : fields) w.u64(static_cast<std::uint64_t>(v));
  w.u64(static_cast<std::uint64_t>(c.decoder_channels));
}

inline NetConfig read_config(Reader& r) {
  NetConfig c;
  c.name = r.str();
  std::int64_t fields[13];
  for (auto& v : fields) v = static_cast<std::int64_t>(r.u64());
  c.input_size = static_cast<int>(fields[0]);
  c.stem_channels = static_cast<int>(fields[1]);
  for (int i = 0; i < 4; ++i) c.stage_mid_channels[static_cast<std::size_t>(i)] = static_cast<int>(fields[2 + i]);
  for (int i = 0; i < 4; ++i) c.stage_depths[static_cast<std::size_t>(i)] = static_cast<int>(fields[6 + i]);
  c.embed_channels = static_cast<int>(fields[10]);
  c.num_classes = static_cast<int>(fields[11]);
  c.decode_size = static_cast<int>(fields[12]);
  c.decoder_channels = static_cast<int>(r.u64());
  return c;
}

}  // namespace detail

/// Versioned binary checkpoint: magic, subset flag, architecture config,
/// then one record per parameter (and per batch-norm running buffer, flagged
/// as such). Training checkpoints append a "TRN1" section with the epoch and
/// momentum buffers. Round-trips are bitwise exact for float bundles.
template <class T>
void save_checkpoint(ModelBundle<T>& bundle, const std::string& path,
                     CheckpointSubset subset = CheckpointSubset::full,
                     const TrainStateData* train_state = nullptr) {
  if (subset == CheckpointSubset::test && train_state)
    throw std::invalid_argument("checkpoint: training state cannot ride a test-subset file");
  detail::Writer w(path);
  w.bytes(kCheckpointMagic, 6);
  w.u8(static_cast<std::uint8_t>(subset));
  detail::write_config(w, bundle.config);
  ParamRefs<T> refs = subset == CheckpointSubset::test ? bundle.collect_test_subset()
                                                       : bundle.collect_all();
  w.u64(static_cast<std::uint64_t>(refs.params.size() + refs.buffers.size()));
  for (auto* p : refs.params) detail::write_record(w, 0, p->name, p->value);
  for (auto& [name, t] : refs.buffers) detail::write_record(w, 1, name, *t);
  if (train_state) {
    w.bytes("TRN1", 4);
    w.u32(static_cast<std::uint32_t>(train_state->epoch));
    w.u64(static_cast<std::uint64_t>(train_state->momentum.size()));
    for (auto& [name, t] : train_state->momentum) detail::write_record(w, 1, name, t);
  }
  if (!w.f) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <class T>
struct LoadedCheckpoint {
  ModelBundle<T> bundle;
  CheckpointSubset subset = CheckpointSubset::full;
  std::optional<TrainStateData> train_state;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  char magic[6];
  r.bytes(magic, 6);
  if (std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint8_t subset_byte = r.u8();
  if (subset_byte > 1) throw std::runtime_error("checkpoint: bad subset flag in " + path);
  const NetConfig config = detail::read_config(r);

  LoadedCheckpoint<T> out;
  Rng rng(0);
  out.bundle = build<T>(config, rng);
  out.subset = static_cast<CheckpointSubset>(subset_byte);
  if (out.subset == CheckpointSubset::test) out.bundle.has_training_heads = false;

  ParamRefs<T> refs = out.subset == CheckpointSubset::test ? out.bundle.collect_test_subset()
                                                           : out.bundle.collect_all();
  std::map<std::string, Tensor<T>*> params, buffers;
  for (auto* p : refs.params) params[p->name] = &p->value;
  for (auto& [name, t] : refs.buffers) buffers[name] = t;

  const std::uint64_t n = r.u64();
  if (n != params.size() + buffers.size())
    throw std::runtime_error("checkpoint: record count mismatch in " + path);
  std::size_t seen = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    detail::RawRecord rec = detail::read_record(r);
    auto& table = rec.kind == 0 ? params : buffers;
    auto it = table.find(rec.name);
    if (it == table.end())
      throw std::runtime_error("checkpoint: unexpected record '" + rec.name + "' in " + path);
    if (it->second->shape != rec.value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + rec.name + "' in " + path +
                               ": " + it->second->shape_string() + " vs " +
                               rec.value.shape_string());
    for (std::int64_t j = 0; j < rec.value.numel(); ++j)
      (*it->second)[j] = static_cast<T>(rec.value[j]);
    ++seen;
  }
  if (seen != params.size() + buffers.size())
    throw std::runtime_error("checkpoint: missing records in " + path);

  if (!r.at_eof()) {
    char tag[4];
    r.bytes(tag, 4);
    if (std::memcmp(tag, "TRN1", 4) != 0)
      throw std::runtime_error("checkpoint: bad trailing section in " + path);
    TrainStateData ts;
    ts.epoch = static_cast<int>(r.u32());
    const std::uint64_t m = r.u64();
    for (std::uint64_t i = 0; i < m; ++i) {
      detail::RawRecord rec = detail::read_record(r);
      ts.momentum.emplace_back(rec.name, std::move(rec.value));
    }
    out.train_state = std::move(ts);
    if (!r.at_eof()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
  }
  return out;
}

}  // namespace fsgfa
