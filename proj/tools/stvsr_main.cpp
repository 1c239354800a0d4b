// stvsr: space-time video super-resolution on synthetic clips.
// Subcommands: synth-data, degrade, flow, restore, train, evaluate, ablate.
// Exit codes: 0 ok, 2 config/validation, 3 I/O, 4 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stvsr/config.hpp"
#include "stvsr/io.hpp"
#include "stvsr/metrics.hpp"
#include "stvsr/pipeline.hpp"
#include "stvsr/png_io.hpp"
#include "stvsr/train.hpp"

namespace fs = std::filesystem;
using namespace stvsr;

namespace {

using real = float;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool verbose = false;

  Config load() const {
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    if (seed_set) c.set("seed", std::to_string(seed));
    return c;
  }
};

std::uint64_t root_seed(const Config& c) {
  return c.get_u64("seed", c.get_u64("train.seed", 0));
}

ModelSpec model_spec_from(const Config& c) {
  ModelSpec m;
  m.scales.phi_s = static_cast<int>(c.get_int("phi_s", m.scales.phi_s));
  m.scales.phi_t = static_cast<int>(c.get_int("phi_t", m.scales.phi_t));
  m.vrg.n_keyframes = static_cast<int>(c.get_int("n_keyframes", m.vrg.n_keyframes));
  m.diffusion.t = static_cast<int>(c.get_int("t", m.diffusion.t));
  m.diffusion.schedule.t_max =
      static_cast<int>(c.get_int("t_max", m.diffusion.schedule.t_max));
  m.mask_eps = c.get_double("mask_eps", m.mask_eps);
  return m;
}

FlowEstimatorConfig<real> flow_config_from(const Config& c) {
  FlowEstimatorConfig<real> f;
  f.block = static_cast<int>(c.get_int("flow_block", f.block));
  f.search_radius = static_cast<int>(c.get_int("flow_radius", f.search_radius));
  f.levels = static_cast<int>(c.get_int("flow_levels", f.levels));
  return f;
}

Video<real> load_clip(const std::string& path) {
  if (fs::is_directory(path)) return load_png_sequence<real>(path);
  return load_rvid<real>(path);
}

void save_clip(const Video<real>& v, const std::string& path) {
  if (fs::path(path).extension() == ".rvid") {
    save_rvid(v, path);
  } else if (!fs::path(path).has_extension()) {
    fs::create_directories(path);
    save_png_sequence(v, path);
  } else {
    throw ConfigError("unsupported clip output: " + path +
                      " (use .rvid or a directory)");
  }
}

int cmd_synth(const GlobalOpts& g, const std::string& out_dir, int clips, int t,
              int h, int w, bool verbose) {
  Config c = g.load();
  std::uint64_t seed = root_seed(c);
  fs::create_directories(out_dir);
  std::vector<SceneSpec> specs = make_corpus(seed, "synth", clips, t, h, w);
  for (int i = 0; i < clips; ++i) {
    ClipWithTruth<real> clip = generate_clip<real>(specs[static_cast<std::size_t>(i)]);
    char name[32];
    std::snprintf(name, sizeof name, "clip%03d.rvid", i);
    std::string path = (fs::path(out_dir) / name).string();
    save_rvid(clip.video, path);
    save_flow_rvid(clip.true_flow_fwd, flow_sidecar_path(path, true));
    save_flow_rvid(clip.true_flow_bwd, flow_sidecar_path(path, false));
    if (verbose)
      std::fprintf(stderr, "wrote %s (%dx%dx%dx%d)\n", path.c_str(), clip.video.t,
                   clip.video.h, clip.video.w, clip.video.c);
  }
  std::printf("clips=%d dir=%s\n", clips, out_dir.c_str());
  return kExitOk;
}

int cmd_degrade(const GlobalOpts& g, const std::string& in, const std::string& out) {
  Config c = g.load();
  DegradationConfig dc = degradation_from_config(c, root_seed(c));
  Video<real> hq = load_clip(in);
  TrainingPair<real> pair = make_pair(hq, dc);
  save_clip(pair.lq, out);
  std::printf("lq=%dx%dx%dx%d out=%s\n", pair.lq.t, pair.lq.h, pair.lq.w, pair.lq.c,
              out.c_str());
  return kExitOk;
}

int cmd_flow(const GlobalOpts& g, const std::string& a, const std::string& b,
             const std::string& out) {
  Config c = g.load();
  FlowEstimatorConfig<real> fc = flow_config_from(c);
  Video<real> va = load_clip(a), vb = load_clip(b);
  FlowField<real> fl = estimate_flow(va, 0, vb, 0, fc);
  save_flow_rvid(std::vector<FlowField<real>>{fl}, out);
  double mdx = 0, mdy = 0;
  for (int y = 0; y < fl.h; ++y)
    for (int x = 0; x < fl.w; ++x) {
      mdx += fl.dx(y, x);
      mdy += fl.dy(y, x);
    }
  double n = static_cast<double>(fl.h) * fl.w;
  std::printf("flow %dx%d mean=(%.3f, %.3f) out=%s\n", fl.w, fl.h, mdx / n, mdy / n,
              out.c_str());
  return kExitOk;
}

int cmd_restore(const GlobalOpts& g, const std::string& in, const std::string& ckpt,
                const std::string& out, const std::string& arm) {
  Config c = g.load();
  ModelSpec spec = model_spec_from(c);
  ArmMode mode = parse_arm(arm);
  ParamStore<real> store;
  register_model(store, root_seed(c), spec);
  std::map<std::string, std::string> meta = load_checkpoint(ckpt, store);
  if (auto it = meta.find("phi_s"); it != meta.end() &&
      it->second != std::to_string(spec.scales.phi_s))
    throw ConfigError("checkpoint phi_s " + it->second + " does not match config");
  if (auto it = meta.find("phi_t"); it != meta.end() &&
      it->second != std::to_string(spec.scales.phi_t))
    throw ConfigError("checkpoint phi_t " + it->second + " does not match config");
  Video<real> lq = load_clip(in);
  Video<real> restored = restore(store, lq, spec, flow_config_from(c), mode);
  save_clip(restored, out);
  std::printf("restored=%dx%dx%dx%d out=%s\n", restored.t, restored.h, restored.w,
              restored.c, out.c_str());
  return kExitOk;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir,
              const std::string& out_ckpt, const std::string& log_path,
              const std::string& arm) {
  Config c = g.load();
  ModelSpec spec = model_spec_from(c);
  TrainConfig tc = train_config_from(c);
  tc.degrade = degradation_from_config(c, tc.seed);
  ArmMode mode = parse_arm(arm);

  // Corpus: scene seeds. A data directory of RVID clips seeds the corpus
  // size; the clips themselves are regenerated analytically so ground-truth
  // flows exist.
  std::vector<SceneSpec> corpus;
  if (!data_dir.empty() && fs::is_directory(data_dir)) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(data_dir))
      if (e.path().extension() == ".rvid" &&
          e.path().stem().string().find(".flow") == std::string::npos)
        ++n;
    if (n > 0) tc.corpus_clips = n;
  }
  corpus = make_corpus(tc.seed, "corpus", tc.corpus_clips, tc.crop_t, tc.crop_h,
                       tc.crop_w);

  std::ofstream log;
  std::ostream* logp = nullptr;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open log: " + log_path);
    logp = &log;
  } else if (g.verbose) {
    logp = &std::cerr;
  }

  ParamStore<real> store;
  register_model(store, tc.seed, spec);
  if (arm_uses_diffusion(mode)) pretrain_vae(store, spec, corpus, tc, logp);
  TrainResult res = train(store, spec, corpus, tc, mode, logp, out_ckpt);
  std::printf("steps=%ld total=%.6g ckpt=%s\n", res.steps_done, res.last.total,
              out_ckpt.c_str());
  return kExitOk;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& restored,
                 const std::string& reference, const std::string& out) {
  Config c = g.load();
  FeatureStack<real> fsx;
  FlowEstimatorConfig<real> fc = flow_config_from(c);
  MetricReport r = evaluate<real>(restored, reference, fc, fsx);
  r.config_fingerprint = c.fingerprint();
  if (!out.empty()) r.save(out);
  std::printf("clips=%zu psnr=%.4f ssim=%.4f tof=%.4f tlp=%.6f\n",
              r.clip_ids.size(), r.mean_psnr, r.mean_ssim, r.mean_tof, r.mean_tlp);
  return kExitOk;
}

int cmd_ablate(const GlobalOpts& g, const std::string& out_dir,
               const std::string& arms_csv) {
  Config c = g.load();
  ModelSpec spec = model_spec_from(c);
  TrainConfig tc = train_config_from(c);
  tc.degrade = degradation_from_config(c, tc.seed);

  std::vector<ArmMode> arms;
  std::string token;
  std::istringstream ss(arms_csv);
  while (std::getline(ss, token, ',')) arms.push_back(parse_arm(token));
  if (arms.empty()) throw ConfigError("ablate: no arms given");

  std::ostream* logp = g.verbose ? &std::cerr : nullptr;
  int held = static_cast<int>(c.get_int("held_out_clips", 12));
  std::vector<AblationOutcome> outs = ablate<real>(spec, tc, arms, held, logp);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (const auto& o : outs) {
    if (!out_dir.empty())
      o.report.save((fs::path(out_dir) / (o.arm + ".json")).string());
    std::printf("arm=%s psnr=%.4f ssim=%.4f tof=%.4f tlp=%.6f\n", o.arm.c_str(),
                o.report.mean_psnr, o.report.mean_ssim, o.report.mean_tof,
                o.report.mean_tlp);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  // Single-threaded BLAS keeps results bit-reproducible.
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  setenv("OMP_NUM_THREADS", "1", 0);

  CLI::App app{"space-time video super-resolution on synthetic clips"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--seed", g.seed, "root RNG seed (overrides config)")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_flag("--verbose", g.verbose, "progress to stderr");

  auto* synth = app.add_subcommand("synth-data", "generate synthetic clips + flow sidecars");
  std::string out_dir = "data";
  int clips = 8, t = 17, h = 64, w = 64;
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--clips", clips, "number of clips");
  synth->add_option("--frames", t, "frames per clip");
  synth->add_option("--height", h, "frame height");
  synth->add_option("--width", w, "frame width");

  auto* degrade = app.add_subcommand("degrade", "degrade an HQ clip to LQ");
  std::string din, dout;
  degrade->add_option("--in", din, "input clip (.rvid or PNG dir)")->required();
  degrade->add_option("--out", dout, "output clip")->required();

  auto* flow = app.add_subcommand("flow", "estimate flow between two frames");
  std::string fa, fb, fout;
  flow->add_option("--a", fa, "first frame (.rvid or PNG dir)")->required();
  flow->add_option("--b", fb, "second frame")->required();
  flow->add_option("--out", fout, "output flow (.rvid, C=2 f32)")->required();

  auto* rest = app.add_subcommand("restore", "restore an LQ clip");
  std::string rin, rckpt, rout, rarm = "full";
  rest->add_option("--in", rin, "LQ clip")->required();
  rest->add_option("--ckpt", rckpt, "checkpoint")->required();
  rest->add_option("--out", rout, "restored clip")->required();
  rest->add_option("--arm", rarm, "pipeline arm (default full)");

  auto* tr = app.add_subcommand("train", "train the pipeline");
  std::string tdata, tout = "model.ckpt", tlog, tarm = "full";
  tr->add_option("--data", tdata, "clip directory (sizes the corpus)");
  tr->add_option("--out", tout, "checkpoint path");
  tr->add_option("--log", tlog, "metrics log path");
  tr->add_option("--arm", tarm, "pipeline arm (default full)");

  auto* ev = app.add_subcommand("evaluate", "compare restored vs reference clips");
  std::string erest, eref, eout;
  ev->add_option("--restored", erest, "restored clip directory")->required();
  ev->add_option("--reference", eref, "reference clip directory")->required();
  ev->add_option("--out", eout, "report JSON path");

  auto* ab = app.add_subcommand("ablate", "matched-budget arm comparison");
  std::string aout, aarms = "interp,flow2,flow_multi,no_vrg,full";
  ab->add_option("--out", aout, "report directory");
  ab->add_option("--arms", aarms, "comma-separated arm list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(g, out_dir, clips, t, h, w, g.verbose);
    if (degrade->parsed()) return cmd_degrade(g, din, dout);
    if (flow->parsed()) return cmd_flow(g, fa, fb, fout);
    if (rest->parsed()) return cmd_restore(g, rin, rckpt, rout, rarm);
    if (tr->parsed()) return cmd_train(g, tdata, tout, tlog, tarm);
    if (ev->parsed()) return cmd_evaluate(g, erest, eref, eout);
    if (ab->parsed()) return cmd_ablate(g, aout, aarms);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitIo;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitOk;
}
