#include "dfl/autodiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dfl/common/binary_io.hpp"
#include "dfl/common/hash.hpp"

namespace dfl::ad {

std::vector<std::uint8_t> Checkpoint::to_bytes() const {
  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put_string(header.dump());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (static_cast<Index>(e.values.size()) != numel(e.shape))
      throw CheckpointError("entry " + e.name + ": value count does not match shape");
    w.put_string(e.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.role));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (Index d : e.shape) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    if (e.dtype == DType::f32)
      for (double v : e.values) w.put<float>(static_cast<float>(v));
    else
      for (double v : e.values) w.put<double>(v);
  }
  return w.take();
}

Checkpoint Checkpoint::from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  try {
    r.get_bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.header = nlohmann::json::parse(r.get_string());
    const auto count = r.get<std::uint32_t>();
    ckpt.entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      CheckpointEntry e;
      e.name = r.get_string();
      e.role = static_cast<EntryRole>(r.get<std::uint8_t>());
      e.dtype = static_cast<DType>(r.get<std::uint8_t>());
      if (e.dtype != DType::f32 && e.dtype != DType::f64) throw CheckpointError("entry " + e.name + ": bad dtype");
      const auto rank = r.get<std::uint32_t>();
      for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
      const auto n = static_cast<std::size_t>(numel(e.shape));
      const std::size_t width = e.dtype == DType::f32 ? 4 : 8;
      if (n * width > r.remaining()) throw CheckpointError("entry " + e.name + ": truncated data");
      e.values.resize(n);
      for (std::size_t k = 0; k < n; ++k)
        e.values[k] = e.dtype == DType::f32 ? static_cast<double>(r.get<float>()) : r.get<double>();
      ckpt.entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint entries");
    return ckpt;
  } catch (const FormatError& err) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + err.what());
  } catch (const nlohmann::json::exception& err) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + err.what());
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  return from_bytes(bytes);
}

const CheckpointEntry* Checkpoint::find(const std::string& name, EntryRole role) const {
  for (const auto& e : entries)
    if (e.name == name && e.role == role) return &e;
  return nullptr;
}

namespace {

template <typename Real>
CheckpointEntry make_entry(const std::string& name, EntryRole role, const Tensor<Real>& t) {
  CheckpointEntry e;
  e.name = name;
  e.role = role;
  e.dtype = dtype_of<Real>();
  e.shape = t.shape();
  e.values.assign(t.values().begin(), t.values().end());
  return e;
}

template <typename Real>
void copy_entry(const CheckpointEntry& e, Tensor<Real>& dst) {
  if (e.shape != dst.shape())
    throw CheckpointError("entry " + e.name + ": shape " + to_string(e.shape) + " does not match " +
                          to_string(dst.shape()));
  for (Index i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(e.values[static_cast<std::size_t>(i)]);
}

}  // namespace

template <typename Real>
void put_store(Checkpoint& ckpt, const ParameterStore<Real>& store) {
  for (const auto& p : store.entries())
    ckpt.entries.push_back(make_entry(p.name, p.trainable ? EntryRole::parameter : EntryRole::buffer, p.var.value()));
}

template <typename Real>
void get_store(const Checkpoint& ckpt, const ParameterStore<Real>& store) {
  for (const auto& p : store.entries()) {
    const auto* e = ckpt.find(p.name, p.trainable ? EntryRole::parameter : EntryRole::buffer);
    if (!e) throw CheckpointError("checkpoint lacks entry " + p.name);
    Var<Real> v = p.var;
    copy_entry(*e, v.value());
  }
}

template <typename Real>
void put_optimizer(Checkpoint& ckpt, const OptimizerState<Real>& state) {
  ckpt.header["optimizer"] = {{"kind", to_string(state.kind)},
                              {"step", state.step},
                              {"beta1", state.hyper.beta1},
                              {"beta2", state.hyper.beta2},
                              {"eps", state.hyper.eps}};
  for (std::size_t i = 0; i < state.names.size(); ++i) {
    ckpt.entries.push_back(make_entry(state.names[i], EntryRole::first_moment, state.first_moment[i]));
    ckpt.entries.push_back(make_entry(state.names[i], EntryRole::second_moment, state.second_moment[i]));
  }
}

template <typename Real>
void get_optimizer(const Checkpoint& ckpt, OptimizerState<Real>& state) {
  if (!ckpt.header.contains("optimizer")) throw CheckpointError("checkpoint has no optimizer state");
  const auto& h = ckpt.header["optimizer"];
  state.kind = optimizer_kind_from_string(h.at("kind").get<std::string>());
  state.step = h.at("step").get<std::int64_t>();
  state.hyper.beta1 = h.at("beta1").get<double>();
  state.hyper.beta2 = h.at("beta2").get<double>();
  state.hyper.eps = h.at("eps").get<double>();
  for (std::size_t i = 0; i < state.names.size(); ++i) {
    const auto* m = ckpt.find(state.names[i], EntryRole::first_moment);
    const auto* v = ckpt.find(state.names[i], EntryRole::second_moment);
    if (!m || !v) throw CheckpointError("checkpoint lacks optimizer moments for " + state.names[i]);
    copy_entry(*m, state.first_moment[i]);
    copy_entry(*v, state.second_moment[i]);
  }
}

template void put_store<float>(Checkpoint&, const ParameterStore<float>&);
template void put_store<double>(Checkpoint&, const ParameterStore<double>&);
template void get_store<float>(const Checkpoint&, const ParameterStore<float>&);
template void get_store<double>(const Checkpoint&, const ParameterStore<double>&);
template void put_optimizer<float>(Checkpoint&, const OptimizerState<float>&);
template void put_optimizer<double>(Checkpoint&, const OptimizerState<double>&);
template void get_optimizer<float>(const Checkpoint&, OptimizerState<float>&);
template void get_optimizer<double>(const Checkpoint&, OptimizerState<double>&);

}  // namespace dfl::ad
