#include "wrnlab/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "wrnlab/wrn.hpp"

namespace wrnlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32") return 4;
  if (dtype == "float64") return 8;
  throw CheckpointError("checkpoint: unknown dtype '" + dtype + "'");
}

template <typename U>
void append_le(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.insert(out.end(), bytes, bytes + sizeof(U));
}

template <typename U>
U read_le(const std::uint8_t* p) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

std::uint32_t crc_of(const std::vector<std::uint8_t>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_atomic(const fs::path& path, const void* data, std::size_t size) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot write " + tmp.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!f) throw IoError("checkpoint: short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot rename " + tmp.string() + ": " + ec.message());
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
void add_tensor(std::vector<TensorEntry>& index, std::vector<std::uint8_t>& payload, const std::string& name,
                const std::string& kind, const BasicTensor<T>& t) {
  TensorEntry e{name, kind, t.shape(), payload.size(), t.numel()};
  for (std::size_t i = 0; i < t.numel(); ++i) append_le<T>(payload, t[i]);
  index.push_back(std::move(e));
}

}  // namespace

std::string CheckpointManifest::to_json() const {
  json j;
  j["version"] = version;
  j["dtype"] = dtype;
  j["arch"] = spec ? json(to_config_text(*spec)) : json(nullptr);
  if (spec) j["arch_notation"] = spec->notation();
  json ts = json::array();
  for (const auto& t : tensors) {
    ts.push_back({{"name", t.name}, {"kind", t.kind}, {"shape", t.shape}, {"offset", t.offset}, {"count", t.count}});
  }
  j["tensors"] = std::move(ts);
  j["has_optimizer"] = has_optimizer;
  j["rng_state"] = rng_state;
  j["epoch"] = epoch;
  j["step"] = step;
  j["seed"] = seed;
  j["checksum_crc32"] = checksum;
  j["note"] = note;
  return j.dump(2) + "\n";
}

CheckpointManifest CheckpointManifest::from_json(const std::string& text) {
  CheckpointManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<int>();
    m.dtype = j.at("dtype").get<std::string>();
    if (!j.at("arch").is_null()) m.spec = arch_from_config_text(j.at("arch").get<std::string>());
    for (const auto& t : j.at("tensors")) {
      m.tensors.push_back(TensorEntry{t.at("name").get<std::string>(), t.at("kind").get<std::string>(),
                                      t.at("shape").get<Shape>(), t.at("offset").get<std::uint64_t>(),
                                      t.at("count").get<std::uint64_t>()});
    }
    m.has_optimizer = j.at("has_optimizer").get<bool>();
    m.rng_state = j.value("rng_state", std::string());
    m.epoch = j.value("epoch", 0);
    m.step = j.value("step", std::uint64_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    m.checksum = j.at("checksum_crc32").get<std::uint32_t>();
    m.note = j.value("note", std::string());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return m;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const OptimizerState<T>* state, const std::string& dir, std::uint64_t seed,
                     const std::string& note) {
  CheckpointManifest m;
  m.dtype = dtype_name<T>();
  m.spec = net.spec();
  m.seed = seed;
  m.note = note;
  std::vector<std::uint8_t> payload;
  for (const auto& p : net.parameters()) add_tensor(m.tensors, payload, p.name, "param", p.value);
  const auto& bns = net.batch_norm_states();
  for (std::size_t i = 0; i < bns.size(); ++i) {
    add_tensor(m.tensors, payload, "bn" + std::to_string(i), "bn_mean", bns[i].running_mean);
    add_tensor(m.tensors, payload, "bn" + std::to_string(i), "bn_var", bns[i].running_var);
  }
  if (state) {
    m.has_optimizer = true;
    m.epoch = state->epoch;
    m.step = state->step;
    m.rng_state = state->rng_state();
    for (std::size_t i = 0; i < state->velocity.size(); ++i) {
      add_tensor(m.tensors, payload, net.parameters().at(i).name, "velocity", state->velocity[i]);
    }
  }
  m.checksum = crc_of(payload);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("checkpoint: cannot create " + dir + ": " + ec.message());
  write_atomic(fs::path(dir) / "payload.bin", payload.data(), payload.size());
  const std::string text = m.to_json();
  write_atomic(fs::path(dir) / "manifest.json", text.data(), text.size());
}

CheckpointManifest read_manifest(const std::string& dir) {
  const auto bytes = read_file(fs::path(dir) / "manifest.json");
  CheckpointManifest m = CheckpointManifest::from_json(std::string(bytes.begin(), bytes.end()));
  if (m.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: version " + std::to_string(m.version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  dtype_size(m.dtype);
  return m;
}

template <typename T>
CheckpointManifest load_checkpoint_into(Network<T>& net, const std::string& dir, OptimizerState<T>* state) {
  CheckpointManifest m = read_manifest(dir);
  const auto payload = read_file(fs::path(dir) / "payload.bin");
  if (crc_of(payload) != m.checksum) throw CheckpointError("checkpoint: checksum mismatch in " + dir + "/payload.bin");
  const std::size_t elem = dtype_size(m.dtype);

  auto read_into = [&](const TensorEntry& e, BasicTensor<T>& dst) {
    if (e.shape != dst.shape()) {
      throw CheckpointError("checkpoint: tensor '" + e.name + "' (" + e.kind + ") has shape " + shape_string(e.shape) +
                            " but the network expects " + shape_string(dst.shape()));
    }
    if (e.count != dst.numel() || e.offset + e.count * elem > payload.size()) {
      throw CheckpointError("checkpoint: tensor '" + e.name + "' exceeds the payload");
    }
    const std::uint8_t* p = payload.data() + e.offset;
    for (std::size_t i = 0; i < e.count; ++i) {
      dst[i] = elem == 4 ? static_cast<T>(read_le<float>(p + i * 4)) : static_cast<T>(read_le<double>(p + i * 8));
    }
  };

  // Stage everything first so a failed load leaves the network untouched.
  Network<T> staged = net;
  std::optional<OptimizerState<T>> staged_state;
  if (state) {
    staged_state = OptimizerState<T>::init(net, 0);
  }
  std::map<std::string, std::size_t> param_pos;
  for (std::size_t i = 0; i < staged.parameters().size(); ++i) param_pos[staged.parameters()[i].name] = i;
  std::size_t params_seen = 0, bn_seen = 0;
  for (const auto& e : m.tensors) {
    if (e.kind == "param" || e.kind == "velocity") {
      const auto it = param_pos.find(e.name);
      if (it == param_pos.end()) throw CheckpointError("checkpoint: network has no parameter '" + e.name + "'");
      if (e.kind == "param") {
        read_into(e, staged.parameters()[it->second].value);
        ++params_seen;
      } else if (staged_state) {
        read_into(e, staged_state->velocity[it->second]);
      }
    } else if (e.kind == "bn_mean" || e.kind == "bn_var") {
      const std::size_t idx = std::stoul(e.name.substr(2));
      if (idx >= staged.batch_norm_states().size()) throw CheckpointError("checkpoint: network has no '" + e.name + "'");
      auto& st = staged.batch_norm_states()[idx];
      read_into(e, e.kind == "bn_mean" ? st.running_mean : st.running_var);
      ++bn_seen;
    } else {
      throw CheckpointError("checkpoint: unknown tensor kind '" + e.kind + "'");
    }
  }
  if (params_seen != staged.parameters().size() || bn_seen != 2 * staged.batch_norm_states().size()) {
    throw CheckpointError("checkpoint: stored tensors cover " + std::to_string(params_seen) + " of " +
                          std::to_string(staged.parameters().size()) + " parameters");
  }
  if (staged_state) {
    if (!m.has_optimizer) throw CheckpointError("checkpoint: no optimizer state stored in " + dir);
    staged_state->epoch = m.epoch;
    staged_state->step = m.step;
    staged_state->set_rng_state(m.rng_state);
    *state = std::move(*staged_state);
  }
  net = std::move(staged);
  return m;
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& dir) {
  const CheckpointManifest m = read_manifest(dir);
  if (!m.spec) throw CheckpointError("checkpoint: " + dir + " stores no architecture; load it into a network instead");
  LoadedCheckpoint<T> out{build_network<T>(*m.spec, m.seed), std::nullopt, m};
  if (m.has_optimizer) {
    OptimizerState<T> st;
    out.manifest = load_checkpoint_into(out.net, dir, &st);
    out.state = std::move(st);
  } else {
    out.manifest = load_checkpoint_into<T>(out.net, dir);
  }
  return out;
}

#define WRNLAB_INSTANTIATE_CHECKPOINT(T)                                                                       \
  template void save_checkpoint(const Network<T>&, const OptimizerState<T>*, const std::string&, std::uint64_t, \
                                const std::string&);                                                          \
  template CheckpointManifest load_checkpoint_into(Network<T>&, const std::string&, OptimizerState<T>*);        \
  template LoadedCheckpoint<T> load_checkpoint(const std::string&);

WRNLAB_INSTANTIATE_CHECKPOINT(float)
WRNLAB_INSTANTIATE_CHECKPOINT(double)

}  // namespace wrnlab
