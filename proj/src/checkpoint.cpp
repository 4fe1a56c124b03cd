#include "graspflow/binary_io.hpp"
#include "graspflow/models.hpp"

#include <cstring>

namespace graspflow {

namespace {

constexpr std::string_view kMagic = "GFCKPT01";
constexpr std::uint64_t kMaxTensors = 1u << 16;
constexpr std::uint64_t kMaxDim = 1u << 24;

}  // namespace

std::string serialize_checkpoint(const std::string& kind, const nlohmann::json& config,
                                 const BpsBasis& basis, const std::vector<Parameter*>& state) {
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.text(kind);
  w.text(config.dump());
  if (basis.size() > 0) {
    w.u32(1);
    w.text(serialize_basis(basis));
  } else {
    w.u32(0);
  }
  w.u64(state.size());
  for (const Parameter* p : state) {
    w.text(p->name);
    w.u64(static_cast<std::uint64_t>(p->value.rows()));
    w.u64(static_cast<std::uint64_t>(p->value.cols()));
    w.matrix(p->value);
  }
  const std::uint64_t sum = io::fnv1a(w.buffer());
  w.u64(sum);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 12 || bytes.substr(0, kMagic.size()) != kMagic)
    throw FormatError("not a checkpoint file (bad magic)");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  io::Reader r(body);
  r.bytes(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  if (io::fnv1a(body) != stored) throw FormatError("checkpoint checksum mismatch (corrupted file)");

  Checkpoint c;
  c.kind = r.text(64);
  try {
    c.config = nlohmann::json::parse(r.text());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const std::uint32_t has_basis = r.u32();
  if (has_basis > 1) throw FormatError("bad basis flag");
  if (has_basis) c.basis = deserialize_basis(r.text());
  const std::uint64_t count = r.u64();
  if (count > kMaxTensors) throw FormatError("tensor count out of range");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.text(4096);
    const std::uint64_t rows = r.u64(), cols = r.u64();
    if (rows > kMaxDim || cols > kMaxDim) throw FormatError("tensor shape out of range");
    c.tensors.emplace_back(std::move(name), r.matrix(static_cast<Index>(rows), static_cast<Index>(cols)));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return c;
}

Checkpoint read_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

void restore_state(const Checkpoint& ckpt, const std::vector<Parameter*>& state) {
  if (ckpt.tensors.size() != state.size())
    throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                      std::to_string(state.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& [name, value] = ckpt.tensors[i];
    if (name != state[i]->name) throw FormatError("tensor '" + name + "' where '" + state[i]->name + "' was expected");
    if (value.rows() != state[i]->value.rows() || value.cols() != state[i]->value.cols())
      throw FormatError("tensor '" + name + "' has the wrong shape");
    if (!value.allFinite()) throw FormatError("tensor '" + name + "' holds non-finite values");
  }
  for (std::size_t i = 0; i < state.size(); ++i) state[i]->value = ckpt.tensors[i].second;
}

namespace {

template <typename Model>
void save_any(const std::string& path, const std::string& kind, Model& model) {
  io::write_file(path, serialize_checkpoint(kind, to_json(model.config), model.basis, model.state()));
}

template <typename Model, typename... Extra>
Model load_any(const Checkpoint& ckpt, const std::string& kind, Extra... extra) {
  if (ckpt.kind != kind) throw FormatError("checkpoint holds a '" + ckpt.kind + "' model, not '" + kind + "'");
  Rng rng(0);
  Model model(model_config_from_json(ckpt.config), rng, extra...);
  restore_state(ckpt, model.state());
  model.basis = ckpt.basis;
  if (model.basis.size() > 0 && model.basis.size() != model.config.feature_dim)
    throw FormatError("basis size does not match the model feature width");
  return model;
}

}  // namespace

void save_model(const std::string& path, LvmModel& model) { save_any(path, "lvm", model); }
void save_model(const std::string& path, CnfModel& model) { save_any(path, "cnf", model); }
void save_model(const std::string& path, CvaeBaseline& model) { save_any(path, "cvae", model); }

LvmModel load_lvm(const Checkpoint& ckpt) {
  LvmModel m = load_any<LvmModel>(ckpt, "lvm", FlowInit::random);
  m.validate();
  return m;
}

CnfModel load_cnf(const Checkpoint& ckpt) {
  CnfModel m = load_any<CnfModel>(ckpt, "cnf", FlowInit::random);
  m.validate();
  return m;
}

CvaeBaseline load_cvae(const Checkpoint& ckpt) { return load_any<CvaeBaseline>(ckpt, "cvae"); }

}  // namespace graspflow
