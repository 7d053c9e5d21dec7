#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ureid/error.hpp"
#include "ureid/tensor.hpp"

namespace ureid {

struct SampleMeta {
  int sample_index = 0;
  int identity = 0;  // ground truth, hidden from training, used by eval only
  int camera = 0;

  bool operator==(const SampleMeta&) const = default;
};

struct SynthConfig {
  int n_ids = 20;
  int n_cams = 4;
  int samples_per_id = 20;
  int h = 8, w = 4, c = 16;
  double style_strength = 1.0;
  double noise_sigma = 0.1;
  int foreground_rows = 4;
  uint64_t seed = 1;

  void validate() const {
    if (n_ids < 1 || n_cams < 1 || samples_per_id < 1)
      throw ConfigError("n_ids, n_cams and samples_per_id must be >= 1");
    if (h < 1 || w < 1 || c < 1) throw ConfigError("tensor dims must be >= 1");
    if (foreground_rows < 1 || foreground_rows > h)
      throw ConfigError("foreground_rows must be in [1, h]");
    if (style_strength < 0.0) throw ConfigError("style_strength must be >= 0");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (n_cams > samples_per_id)
      throw ConfigError("n_cams > samples_per_id: identities cannot appear under every camera");
  }
};

struct Dataset {
  SynthConfig cfg;
  std::vector<Tensor3> maps;
  std::vector<SampleMeta> metas;

  int count() const { return int(maps.size()); }
};

namespace detail {
// All generated values are rounded through float32 once, so the float32 file
// payload round-trips bit-exactly against the in-memory doubles.
inline double f32(double x) { return double(float(x)); }
}  // namespace detail

// Each map is an identity template in the first foreground_rows rows plus a
// style-scaled camera template in the remaining rows, plus Gaussian noise.
// Camera templates carry a positive channel mean; the per-position channel
// mean is then a usable spatial cue for telling style rows from identity rows.
inline Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const int fr = cfg.foreground_rows;
  const int br = cfg.h - fr;
  std::vector<Vec> id_templates(cfg.n_ids);
  for (auto& t : id_templates) t = gaussian_vec(size_t(fr) * cfg.w * cfg.c, rng);
  std::vector<Vec> cam_templates(cfg.n_cams);
  for (auto& t : cam_templates) t = gaussian_vec(size_t(br) * cfg.w * cfg.c, rng, 1.0, 1.0);

  Dataset ds;
  ds.cfg = cfg;
  const int n = cfg.n_ids * cfg.samples_per_id;
  ds.maps.reserve(n);
  ds.metas.reserve(n);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);

  for (int id = 0; id < cfg.n_ids; ++id) {
    for (int s = 0; s < cfg.samples_per_id; ++s) {
      const int cam = s % cfg.n_cams;
      Tensor3 m(cfg.h, cfg.w, cfg.c);
      const size_t fg = size_t(fr) * cfg.w * cfg.c;
      for (size_t t = 0; t < fg; ++t) m.v[t] = id_templates[id][t];
      for (size_t t = 0; t < size_t(br) * cfg.w * cfg.c; ++t)
        m.v[fg + t] = cfg.style_strength * cam_templates[cam][t];
      if (cfg.noise_sigma > 0)
        for (double& x : m.v) x += noise(rng);
      for (double& x : m.v) x = detail::f32(x);
      ds.maps.push_back(std::move(m));
      ds.metas.push_back({int(ds.metas.size()), id, cam});
    }
  }
  return ds;
}

namespace detail {

constexpr uint32_t kDatasetMagic = 0x53445255;  // "URDS"
constexpr uint32_t kDatasetVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& x, const std::string& what) {
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw ParseError("unexpected end of file reading " + what);
}

}  // namespace detail

// Layout: magic, version, n, h, w, c, n_ids, n_cams, style_strength,
// noise_sigma, foreground_rows, seed, then n float32 payloads of h*w*c,
// then n metadata records (sample_index, identity, camera).
inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open '" + path + "' for writing");
  using namespace detail;
  write_pod(os, kDatasetMagic);
  write_pod(os, kDatasetVersion);
  write_pod(os, uint32_t(ds.count()));
  write_pod(os, uint32_t(ds.cfg.h));
  write_pod(os, uint32_t(ds.cfg.w));
  write_pod(os, uint32_t(ds.cfg.c));
  write_pod(os, uint32_t(ds.cfg.n_ids));
  write_pod(os, uint32_t(ds.cfg.n_cams));
  write_pod(os, ds.cfg.style_strength);
  write_pod(os, ds.cfg.noise_sigma);
  write_pod(os, uint32_t(ds.cfg.foreground_rows));
  write_pod(os, ds.cfg.seed);
  for (const Tensor3& m : ds.maps) {
    std::vector<float> row(m.size());
    for (size_t t = 0; t < m.size(); ++t) row[t] = float(m.v[t]);
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
  for (const SampleMeta& sm : ds.metas) {
    write_pod(os, uint32_t(sm.sample_index));
    write_pod(os, uint32_t(sm.identity));
    write_pod(os, uint32_t(sm.camera));
  }
  if (!os) throw ParseError("write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open '" + path + "' for reading");
  using namespace detail;
  uint32_t magic = 0, version = 0, n = 0, h = 0, w = 0, c = 0, n_ids = 0, n_cams = 0, fr = 0;
  read_pod(is, magic, "magic");
  if (magic != kDatasetMagic) throw ParseError("'" + path + "' is not a dataset file (bad magic)");
  read_pod(is, version, "version");
  if (version != kDatasetVersion)
    throw ParseError("unsupported dataset version " + std::to_string(version));
  read_pod(is, n, "sample count");
  read_pod(is, h, "height");
  read_pod(is, w, "width");
  read_pod(is, c, "channels");
  read_pod(is, n_ids, "n_ids");
  read_pod(is, n_cams, "n_cams");

  Dataset ds;
  read_pod(is, ds.cfg.style_strength, "style_strength");
  read_pod(is, ds.cfg.noise_sigma, "noise_sigma");
  read_pod(is, fr, "foreground_rows");
  read_pod(is, ds.cfg.seed, "seed");
  if (h < 1 || w < 1 || c < 1) throw ParseError("dataset header has degenerate dims");
  ds.cfg.h = int(h);
  ds.cfg.w = int(w);
  ds.cfg.c = int(c);
  ds.cfg.n_ids = int(n_ids);
  ds.cfg.n_cams = int(n_cams);
  ds.cfg.foreground_rows = int(fr);
  ds.cfg.samples_per_id = n_ids > 0 ? int(n / n_ids) : 0;

  ds.maps.reserve(n);
  std::vector<float> row(size_t(h) * w * c);
  for (uint32_t s = 0; s < n; ++s) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!is) throw ParseError("unexpected end of file in payload of sample " + std::to_string(s));
    Tensor3 m(int(h), int(w), int(c));
    for (size_t t = 0; t < row.size(); ++t) {
      if (!std::isfinite(row[t]))
        throw ParseError("non-finite value in payload of sample " + std::to_string(s));
      m.v[t] = double(row[t]);
    }
    ds.maps.push_back(std::move(m));
  }
  std::vector<bool> seen(n, false);
  for (uint32_t s = 0; s < n; ++s) {
    uint32_t idx = 0, id = 0, cam = 0;
    read_pod(is, idx, "metadata record " + std::to_string(s));
    read_pod(is, id, "metadata record " + std::to_string(s));
    read_pod(is, cam, "metadata record " + std::to_string(s));
    if (idx >= n || seen[idx])
      throw ParseError("metadata record " + std::to_string(s) + " has bad sample_index " +
                       std::to_string(idx));
    seen[idx] = true;
    if (id >= n_ids)
      throw ParseError("metadata record " + std::to_string(s) + " has identity " +
                       std::to_string(id) + " >= n_ids " + std::to_string(n_ids));
    if (cam >= n_cams)
      throw ParseError("metadata record " + std::to_string(s) + " has camera " +
                       std::to_string(cam) + " >= n_cams " + std::to_string(n_cams));
    ds.metas.push_back({int(idx), int(id), int(cam)});
  }
  return ds;
}

}  // namespace ureid
