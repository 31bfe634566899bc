#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/schedule.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/models/model.hpp"

namespace recdiff {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are unsupported");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "binary formats require 32-bit IEEE floats");

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}
inline void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw IoError("unexpected end of file");
}

inline void put_u16(std::ostream& os, std::uint16_t v) { put_bytes(os, &v, 2); }
inline void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
inline void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, 8); }
inline void put_f32(std::ostream& os, float v) { put_bytes(os, &v, 4); }

inline std::uint16_t get_u16(std::istream& is) {
  std::uint16_t v;
  get_bytes(is, &v, 2);
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v;
  get_bytes(is, &v, 4);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v;
  get_bytes(is, &v, 8);
  return v;
}
inline float get_f32(std::istream& is) {
  float v;
  get_bytes(is, &v, 4);
  return v;
}

inline void put_json(std::ostream& os, const nlohmann::json& j) {
  const std::string s = j.dump();
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}
inline nlohmann::json get_json(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  get_bytes(is, s.data(), n);
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed header JSON: ") + e.what());
  }
}

inline void check_magic(std::istream& is, const char want[4], const char* what) {
  char got[4];
  get_bytes(is, got, 4);
  if (std::memcmp(got, want, 4) != 0)
    throw IoError(std::string("not a ") + what + " file (bad magic)");
}

inline void expect_no_trailing(std::istream& is, const char* what) {
  is.peek();
  if (!is.eof()) throw IoError(std::string(what) + " file has trailing data");
}

// json.at with an IoError instead of a json exception, so format problems
// surface uniformly.
template <class T>
T header_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw IoError(std::string("header is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(std::string("header field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectory dataset ("DTRD"): header JSON describing the layout, then fixed-
// size records of raw trajectory floats followed by n_f contact-mode bytes.
// Task corpora use n_f = 0 (no mode bytes).
// ---------------------------------------------------------------------------
struct DatasetFile {
  int H = 0, d_s = 0, d_u = 0, n_f = 0;
  Normalizer norm;            // channel statistics (identity when unused)
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<Trajectory> trajs;
  std::vector<std::vector<int>> modes;  // one per trajectory when n_f > 0
};

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void write_dataset(const std::string& path, const DatasetFile& ds) {
  if (ds.H < 1 || ds.d_s < 1 || ds.d_u < 1 || ds.n_f < 0)
    throw ParameterError("dataset layout fields must be positive");
  const TrajLayout lay{ds.H, ds.d_s, ds.d_u};
  if (static_cast<int>(ds.norm.mean.size()) != lay.channels() ||
      static_cast<int>(ds.norm.stdev.size()) != lay.channels())
    throw DimensionError("dataset normalizer does not match the layout");
  for (const Trajectory& tr : ds.trajs)
    if (tr.H != ds.H || tr.d_s != ds.d_s || tr.d_u != ds.d_u)
      throw DimensionError("dataset trajectory does not match the header layout");
  if (ds.n_f > 0) {
    if (ds.modes.size() != ds.trajs.size())
      throw DimensionError("dataset needs one mode per trajectory");
    for (const auto& m : ds.modes) {
      if (static_cast<int>(m.size()) != ds.n_f)
        throw DimensionError("dataset mode arity mismatch");
      for (int v : m)
        if (v != 0 && v != 1) throw ParameterError("contact modes are 0/1");
    }
  } else if (!ds.modes.empty()) {
    throw DimensionError("a modeless dataset cannot carry modes");
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  detail::put_bytes(os, "DTRD", 4);
  detail::put_u16(os, kDatasetVersion);
  nlohmann::json h{{"H", ds.H},
                   {"d_s", ds.d_s},
                   {"d_u", ds.d_u},
                   {"n_f", ds.n_f},
                   {"normalization", {{"mean", ds.norm.mean}, {"stdev", ds.norm.stdev}}},
                   {"provenance", ds.provenance}};
  detail::put_json(os, h);
  detail::put_u64(os, ds.trajs.size());
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    for (float v : ds.trajs[i].flat) detail::put_f32(os, v);
    for (int j = 0; j < ds.n_f; ++j) {
      const std::uint8_t b = static_cast<std::uint8_t>(ds.modes[i][static_cast<size_t>(j)]);
      detail::put_bytes(os, &b, 1);
    }
  }
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

inline DatasetFile read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  detail::check_magic(is, "DTRD", "dataset");
  const std::uint16_t version = detail::get_u16(is);
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  const nlohmann::json h = detail::get_json(is);

  DatasetFile ds;
  ds.H = detail::header_get<int>(h, "H");
  ds.d_s = detail::header_get<int>(h, "d_s");
  ds.d_u = detail::header_get<int>(h, "d_u");
  ds.n_f = detail::header_get<int>(h, "n_f");
  if (ds.H < 1 || ds.d_s < 1 || ds.d_u < 1 || ds.n_f < 0)
    throw IoError("dataset header layout fields out of range");
  const nlohmann::json nj = detail::header_get<nlohmann::json>(h, "normalization");
  ds.norm.mean = detail::header_get<std::vector<float>>(nj, "mean");
  ds.norm.stdev = detail::header_get<std::vector<float>>(nj, "stdev");
  ds.provenance = h.value("provenance", nlohmann::json::object());
  const TrajLayout lay{ds.H, ds.d_s, ds.d_u};
  if (static_cast<int>(ds.norm.mean.size()) != lay.channels() ||
      static_cast<int>(ds.norm.stdev.size()) != lay.channels())
    throw IoError("dataset normalizer does not match the layout");

  const std::uint64_t count = detail::get_u64(is);
  ds.trajs.reserve(count);
  if (ds.n_f > 0) ds.modes.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    Trajectory tr = Trajectory::zeros(ds.H, ds.d_s, ds.d_u);
    for (float& v : tr.flat) v = detail::get_f32(is);
    ds.trajs.push_back(std::move(tr));
    if (ds.n_f > 0) {
      std::vector<int> mode(static_cast<size_t>(ds.n_f));
      for (int j = 0; j < ds.n_f; ++j) {
        std::uint8_t b;
        detail::get_bytes(is, &b, 1);
        if (b > 1) throw IoError("dataset mode byte out of range");
        mode[static_cast<size_t>(j)] = b;
      }
      ds.modes.push_back(std::move(mode));
    }
  }
  detail::expect_no_trailing(is, "dataset");
  return ds;
}

// ---------------------------------------------------------------------------
// Model checkpoint ("DTCK"): everything needed to rebuild the model — layout,
// schedule betas, normalizer, architecture, guidance config, training lr and
// seed — then the flat parameter vector. Loading rebuilds the architecture
// and overwrites its parameters, restoring bit-identical inference.
// ---------------------------------------------------------------------------
inline void write_checkpoint(const std::string& path, const DiffusionModel& m,
                             std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  detail::put_bytes(os, "DTCK", 4);
  detail::put_u16(os, kCheckpointVersion);
  nlohmann::json h{
      {"kind", m.has_head() ? "joint" : "task"},
      {"layout", {{"H", m.lay.H}, {"d_s", m.lay.d_s}, {"d_u", m.lay.d_u}}},
      {"n_f", m.n_f},
      {"schedule", {{"T_D", m.sched.T_D}, {"beta", m.sched.beta}}},
      {"normalizer", {{"mean", m.nz.mean}, {"stdev", m.nz.stdev}}},
      {"unet",
       {{"base_width", m.uspec.base_width},
        {"mults", m.uspec.mults},
        {"kernel", m.uspec.kernel},
        {"emb_dim", m.uspec.emb_dim}}},
      {"lr", m.opt.lr()},
      {"seed", seed},
      {"param_count", m.param_count()}};
  if (m.has_head()) {
    h["head"] = {{"hidden", m.hspec.hidden}};
    h["cfg"] = {{"w", m.cfg.w}, {"p_drop", m.cfg.p_drop}};
  }
  detail::put_json(os, h);
  const std::vector<float> flat = m.params.flat();
  detail::put_u64(os, flat.size());
  for (float v : flat) detail::put_f32(os, v);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

inline DiffusionModel read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  detail::check_magic(is, "DTCK", "checkpoint");
  const std::uint16_t version = detail::get_u16(is);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const nlohmann::json h = detail::get_json(is);

  const std::string kind = detail::header_get<std::string>(h, "kind");
  if (kind != "task" && kind != "joint") throw IoError("unknown checkpoint kind " + kind);
  const nlohmann::json lj = detail::header_get<nlohmann::json>(h, "layout");
  const TrajLayout lay{detail::header_get<int>(lj, "H"), detail::header_get<int>(lj, "d_s"),
                       detail::header_get<int>(lj, "d_u")};
  const int n_f = detail::header_get<int>(h, "n_f");
  if ((kind == "joint") != (n_f > 0)) throw IoError("checkpoint kind contradicts n_f");

  const nlohmann::json sj = detail::header_get<nlohmann::json>(h, "schedule");
  NoiseSchedule sched;
  try {
    sched = NoiseSchedule::from_betas(detail::header_get<std::vector<double>>(sj, "beta"));
  } catch (const ParameterError& e) {
    throw IoError(std::string("checkpoint schedule invalid: ") + e.what());
  }
  if (sched.T_D != detail::header_get<int>(sj, "T_D"))
    throw IoError("checkpoint schedule length contradicts T_D");

  const nlohmann::json nj = detail::header_get<nlohmann::json>(h, "normalizer");
  Normalizer nz;
  nz.mean = detail::header_get<std::vector<float>>(nj, "mean");
  nz.stdev = detail::header_get<std::vector<float>>(nj, "stdev");
  if (static_cast<int>(nz.mean.size()) != lay.channels() ||
      static_cast<int>(nz.stdev.size()) != lay.channels())
    throw IoError("checkpoint normalizer does not match the layout");

  const nlohmann::json uj = detail::header_get<nlohmann::json>(h, "unet");
  TemporalUNetSpec uspec;
  uspec.base_width = detail::header_get<int>(uj, "base_width");
  uspec.mults = detail::header_get<std::vector<int>>(uj, "mults");
  uspec.kernel = detail::header_get<int>(uj, "kernel");
  uspec.emb_dim = detail::header_get<int>(uj, "emb_dim");

  const double lr = detail::header_get<double>(h, "lr");
  const std::uint64_t seed = detail::header_get<std::uint64_t>(h, "seed");
  Rng rng(seed);

  DiffusionModel m;
  if (kind == "task") {
    m = DiffusionModel::make_task(lay, sched, nz, uspec, rng, lr);
  } else {
    const nlohmann::json hj = detail::header_get<nlohmann::json>(h, "head");
    ContactHeadSpec hspec;
    hspec.hidden = detail::header_get<int>(hj, "hidden");
    const nlohmann::json cj = detail::header_get<nlohmann::json>(h, "cfg");
    CFGConfig cfg;
    cfg.w = detail::header_get<double>(cj, "w");
    cfg.p_drop = detail::header_get<double>(cj, "p_drop");
    m = DiffusionModel::make_joint(lay, n_f, sched, nz, uspec, hspec, cfg, rng, lr);
  }

  const long long declared = detail::header_get<long long>(h, "param_count");
  if (declared != m.param_count())
    throw IoError("checkpoint parameter count does not match the architecture");
  const std::uint64_t stored = detail::get_u64(is);
  if (stored != static_cast<std::uint64_t>(m.param_count()))
    throw IoError("checkpoint parameter vector length mismatch");
  std::vector<float> flat(stored);
  for (float& v : flat) v = detail::get_f32(is);
  m.params.set_flat(flat);
  detail::expect_no_trailing(is, "checkpoint");
  return m;
}

}  // namespace recdiff
