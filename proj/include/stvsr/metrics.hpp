#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stvsr/features.hpp"
#include "stvsr/flow.hpp"
#include "stvsr/io.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

constexpr double kPsnrCap = 99.0;  // sentinel for zero-error frames

// Per-frame 10*log10(1/mse) on [0,1] data, capped, averaged over frames.
template <class T>
double psnr(const Video<T>& a, const Video<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  double acc = 0.0;
  std::size_t fe = a.frame_elems();
  for (int f = 0; f < a.t; ++f) {
    const T* pa = a.frame_ptr(f);
    const T* pb = b.frame_ptr(f);
    double mse = 0.0;
    for (std::size_t i = 0; i < fe; ++i) {
      double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(fe);
    acc += (mse <= 0.0) ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return acc / a.t;
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  static const std::vector<double> taps = [] {
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      double d = i - 5;
      k[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (1.5 * 1.5));
      sum += k[static_cast<std::size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return taps;
}

// Valid-window separable Gaussian filter of an h*w plane -> (h-10)*(w-10).
inline void ssim_blur(const std::vector<double>& in, int h, int w,
                      std::vector<double>& out) {
  const auto& k = ssim_window();
  int ow = w - 10, oh = h - 10;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i)
        acc += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  out.assign(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i)
        acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
}

}  // namespace detail

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2,
// valid windows only, averaged over positions, channels, and frames.
template <class T>
double ssim(const Video<T>& a, const Video<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.h < 11 || a.w < 11) throw ShapeError("ssim: frames smaller than the window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
  std::vector<double> xa(plane), xb(plane), xaa(plane), xbb(plane), xab(plane);
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
  double acc = 0.0;
  long count = 0;
  for (int f = 0; f < a.t; ++f)
    for (int ch = 0; ch < a.c; ++ch) {
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
          std::size_t i = static_cast<std::size_t>(y) * a.w + x;
          double va = a.at(f, y, x, ch), vb = b.at(f, y, x, ch);
          xa[i] = va;
          xb[i] = vb;
          xaa[i] = va * va;
          xbb[i] = vb * vb;
          xab[i] = va * vb;
        }
      detail::ssim_blur(xa, a.h, a.w, mu_a);
      detail::ssim_blur(xb, a.h, a.w, mu_b);
      detail::ssim_blur(xaa, a.h, a.w, m_aa);
      detail::ssim_blur(xbb, a.h, a.w, m_bb);
      detail::ssim_blur(xab, a.h, a.w, m_ab);
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double va = m_aa[i] - mu_a[i] * mu_a[i];
        double vb = m_bb[i] - mu_b[i] * mu_b[i];
        double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        ++count;
      }
    }
  return acc / static_cast<double>(count);
}

// tOF: L1 difference between consecutive-pair flows of the two videos,
// estimated with the module flow estimator, averaged over pairs.
template <class T>
double t_of(const Video<T>& out, const Video<T>& gt,
            const FlowEstimatorConfig<T>& cfg) {
  if (!out.same_shape(gt)) throw ShapeError("t_of: shape mismatch");
  if (out.t < 2) throw ShapeError("t_of: need at least 2 frames");
  double acc = 0.0;
  for (int f = 1; f < out.t; ++f) {
    FlowField<T> fo = block_match_flow(out, f - 1, out, f, cfg);
    FlowField<T> fg = block_match_flow(gt, f - 1, gt, f, cfg);
    double pair = 0.0;
    for (std::size_t i = 0; i < fo.data.size(); ++i)
      pair += std::abs(static_cast<double>(fo.data[i]) -
                       static_cast<double>(fg.data[i]));
    acc += pair / static_cast<double>(fo.data.size());
  }
  return acc / (out.t - 1);
}

// tLP: L1 difference between consecutive-frame perceptual distances,
// averaged over pairs. Uses the same frozen feature stack as the loss.
template <class T>
double t_lp(const Video<T>& out, const Video<T>& gt, const FeatureStack<T>& fs) {
  if (!out.same_shape(gt)) throw ShapeError("t_lp: shape mismatch");
  if (out.t < 2) throw ShapeError("t_lp: need at least 2 frames");
  double acc = 0.0;
  for (int f = 1; f < out.t; ++f)
    acc += std::abs(fs.frame_distance(out, f - 1, out, f) -
                    fs.frame_distance(gt, f - 1, gt, f));
  return acc / (out.t - 1);
}

struct MetricReport {
  std::vector<std::string> clip_ids;
  std::vector<double> psnr, ssim, tof, tlp;  // per clip
  double mean_psnr = 0, mean_ssim = 0, mean_tof = 0, mean_tlp = 0;
  std::string tool_version = kToolVersion;
  std::string config_fingerprint;

  void finalize() {
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    mean_psnr = mean(psnr);
    mean_ssim = mean(ssim);
    mean_tof = mean(tof);
    mean_tlp = mean(tlp);
  }

  nlohmann::json to_json() const {
    return {{"clip_ids", clip_ids},   {"psnr", psnr},
            {"ssim", ssim},           {"tof", tof},
            {"tlp", tlp},             {"mean_psnr", mean_psnr},
            {"mean_ssim", mean_ssim}, {"mean_tof", mean_tof},
            {"mean_tlp", mean_tlp},   {"tool_version", tool_version},
            {"config_fingerprint", config_fingerprint}};
  }

  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport r;
    r.clip_ids = j.at("clip_ids").get<std::vector<std::string>>();
    r.psnr = j.at("psnr").get<std::vector<double>>();
    r.ssim = j.at("ssim").get<std::vector<double>>();
    r.tof = j.at("tof").get<std::vector<double>>();
    r.tlp = j.at("tlp").get<std::vector<double>>();
    r.mean_psnr = j.at("mean_psnr").get<double>();
    r.mean_ssim = j.at("mean_ssim").get<double>();
    r.mean_tof = j.at("mean_tof").get<double>();
    r.mean_tlp = j.at("mean_tlp").get<double>();
    r.tool_version = j.value("tool_version", "");
    r.config_fingerprint = j.value("config_fingerprint", "");
    return r;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write report: " + path);
    f << to_json().dump(2) << "\n";
  }

  static MetricReport load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read report: " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw ParseError(std::string("report: invalid JSON: ") + e.what(), 0);
    }
    return from_json(j);
  }
};

template <class T>
void accumulate_metrics(MetricReport& r, const std::string& id,
                        const Video<T>& out, const Video<T>& gt,
                        const FlowEstimatorConfig<T>& flow_cfg,
                        const FeatureStack<T>& fs) {
  r.clip_ids.push_back(id);
  r.psnr.push_back(psnr(out, gt));
  r.ssim.push_back(ssim(out, gt));
  r.tof.push_back(t_of(out, gt, flow_cfg));
  r.tlp.push_back(t_lp(out, gt, fs));
}

// Directory-vs-directory evaluation over matching *.rvid inventories.
template <class T>
MetricReport evaluate(const std::string& restored_dir,
                      const std::string& reference_dir,
                      const FlowEstimatorConfig<T>& flow_cfg,
                      const FeatureStack<T>& fs) {
  namespace fs_ = std::filesystem;
  auto inventory = [](const std::string& dir) {
    std::map<std::string, fs_::path> m;
    if (!fs_::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& e : fs_::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".rvid" &&
          e.path().stem().string().find(".flow") == std::string::npos)
        m[e.path().stem().string()] = e.path();
    return m;
  };
  auto rest = inventory(restored_dir);
  auto ref = inventory(reference_dir);
  if (rest.empty() || ref.empty())
    throw DomainError("evaluate: empty corpus in " +
                      (rest.empty() ? restored_dir : reference_dir));
  std::string missing, extra;
  for (const auto& [id, p] : ref)
    if (!rest.count(id)) missing += " " + id;
  for (const auto& [id, p] : rest)
    if (!ref.count(id)) extra += " " + id;
  if (!missing.empty() || !extra.empty())
    throw DomainError("evaluate: inventory mismatch; missing:" + missing +
                      "; extra:" + extra);

  MetricReport r;
  for (const auto& [id, path] : ref) {
    Video<T> gt = load_rvid<T>(path.string());
    Video<T> out = load_rvid<T>(rest.at(id).string());
    if (!gt.same_shape(out))
      throw ShapeError("evaluate: clip shape mismatch for " + id);
    accumulate_metrics(r, id, out, gt, flow_cfg, fs);
  }
  r.finalize();
  return r;
}

}  // namespace stvsr
