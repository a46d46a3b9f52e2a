#include "stem/commands.hpp"

#include "stem/parallel.hpp"
#include "stem/tensor_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stem {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void prepare_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) {
    throw ConfigError("cannot create output directory " + cfg.out.string());
  }
  set_num_threads(cfg.threads);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FileError("write failed for " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json real_list(const std::vector<double>& values) {
  json arr = json::array();
  for (double v : values) arr.push_back(real(v));
  return arr;
}

FeatureMap load_features(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " file not found: " + path.string());
  return to_feature_map(read_tensor(path));
}

void record_timing(CommandResult& result, const ExperimentConfig& cfg, const std::string& command,
                   double ms) {
  const fs::path path = cfg.out / "timing.json";
  write_text(path, dump(json{{"command", command}, {"wall_time_ms", ms}}));
  result.timing_files.push_back(path);
}

json flop_json(const FlopReport& f) {
  return json{{"variant", std::string(to_string(f.variant))},
              {"projection", f.projection},
              {"em", f.em},
              {"scores", f.scores},
              {"mixing", f.mixing},
              {"attention", f.attention()},
              {"total", f.total()}};
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string params_string(const FlopReport& f) {
  std::ostringstream os;
  os << f.frames << "," << f.height << "," << f.width << "," << f.channels << "," << f.head_dim
     << "," << f.bases << "," << f.iterations;
  return os.str();
}

}  // namespace

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8e", value);
  return buf;
}

std::vector<float> condition_embedding(const ExperimentConfig& cfg) {
  Rng rng(Seed{cfg.seed ^ 0xc0d1710aULL});
  std::vector<float> cond(cfg.cond_dim);
  for (float& v : cond) v = static_cast<float>(rng.normal());
  return cond;
}

std::vector<std::size_t> dedupe_k(const std::vector<std::size_t>& ks,
                                  std::vector<std::string>& warnings) {
  std::vector<std::size_t> unique;
  for (std::size_t k : ks) {
    if (std::find(unique.begin(), unique.end(), k) != unique.end()) {
      warnings.push_back("duplicate K = " + std::to_string(k) + " ignored");
      continue;
    }
    unique.push_back(k);
  }
  return unique;
}

InversionRun run_inversion(const FeatureMap& video, const ExperimentConfig& cfg, Variant variant,
                           std::size_t num_bases) {
  const DiffusionSchedule sched =
      make_schedule(cfg.schedule, cfg.beta_start, cfg.beta_end, cfg.train_steps, cfg.steps);
  const AttentionConfig attn = cfg.attention_config(variant, num_bases);
  const PredictorDims dims{video.channels(), cfg.hidden, cfg.cond_dim};
  const auto pred = make_toy_predictor(cfg.predictor, Seed{cfg.seed}, dims, attn);

  InversionOptions opts;
  // Unguided inversion runs without a condition (a null text prompt).
  const std::vector<float> cond = condition_embedding(cfg);
  if (cfg.guidance) {
    opts.condition = cond;
    opts.guidance = GuidanceConfig{*cfg.guidance, cond, std::vector<float>(cfg.cond_dim, 0.0f)};
  }
  opts.trajectory_stride = 1;

  InversionResult inv = invert_video(VideoLatent{video, 0}, *pred, sched, opts, attn);
  VideoLatent recon = reconstruct_video(inv.final, *pred, sched, opts, attn);

  InversionRun run{inv.final,
                   recon,
                   inv.trajectory,
                   psnr_per_frame(recon.z, video, cfg.peak),
                   std::nullopt,
                   0.0,
                   0.0,
                   count_flops(attn, video.frames(), video.height(), video.width(), cfg.hidden,
                               cfg.hidden)};
  if (video.height() >= 11 && video.width() >= 11) run.ssim = ssim_per_frame(recon.z, video, cfg.peak);
  run.temporal_instability = temporal_instability(inv.noise);
  const double norm = video.flat().cast<double>().norm();
  const double diff = (recon.z.flat().cast<double>() - video.flat().cast<double>()).norm();
  run.relative_error = norm > 0.0 ? diff / norm : diff;
  return run;
}

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg) {
  set_num_threads(cfg.threads);
  Rng rng(Seed{cfg.seed});
  const auto rows = static_cast<Eigen::Index>(cfg.frames * cfg.height * cfg.width);
  const FeatureMap x = FeatureMap::from_rows(
      random_normal(rng, rows, static_cast<Eigen::Index>(cfg.channels)), cfg.frames, cfg.height,
      cfg.width);
  const ProjectionWeights w =
      ProjectionWeights::random(cfg.channels, cfg.head_dim, Seed{cfg.seed + 1});

  std::vector<AttentionConfig> plan;
  std::vector<std::string> ignored;
  for (Variant v : cfg.bench_variants) {
    if (v == Variant::kStem) {
      for (std::size_t k : dedupe_k(cfg.k_list, ignored)) plan.push_back(cfg.attention_config(v, k));
    } else {
      plan.push_back(cfg.attention_config(v, 0));
    }
  }

  std::vector<BenchRow> out;
  for (const AttentionConfig& attn : plan) {
    BenchRow row;
    row.variant = attn.variant;
    row.num_bases = attn.variant == Variant::kStem ? attn.em.num_bases : 0;
    row.flops = count_flops(attn, cfg.frames, cfg.height, cfg.width, cfg.channels, cfg.head_dim);
    (void)self_attention(x, w, attn);  // warm-up
    std::vector<double> times;
    for (int r = 0; r < cfg.repeats; ++r) {
      const auto start = Clock::now();
      const auto result = self_attention(x, w, attn);
      times.push_back(elapsed_ms(start));
      if (result.features.size() == 0) throw InputError("empty attention output");
    }
    row.median_ms = median(times);
    row.min_ms = *std::min_element(times.begin(), times.end());
    row.max_ms = *std::max_element(times.begin(), times.end());
    row.runs = cfg.repeats;
    out.push_back(row);
  }
  return out;
}

CommandResult cmd_em(const ExperimentConfig& cfg) {
  prepare_out(cfg);
  const auto start = Clock::now();
  const FeatureMap x = load_features(cfg.input, "input");
  CommandResult result;
  if (cfg.k_list.size() > 1) result.warnings.push_back("em uses only the first K of the list");
  const EmConfig em = cfg.em_config(cfg.k_list.front());
  const EmResult fit = run_em(x, em);

  const fs::path bases = cfg.out / "bases.stem";
  const fs::path resp = cfg.out / "responsibilities.stem";
  const fs::path initial = cfg.out / "initial_bases.stem";
  const fs::path summary_path = cfg.out / "em_summary.json";
  write_tensor(bases, to_tensor(fit.bases.matrix()));
  write_tensor(resp, to_tensor(fit.responsibilities.matrix()));
  write_tensor(initial, to_tensor(fit.initial.matrix()));

  json bases_json = json::array();
  for (Eigen::Index k = 0; k < fit.bases.matrix().rows(); ++k) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.bases.matrix().cols(); ++c) row.push_back(fit.bases.matrix()(k, c));
    bases_json.push_back(row);
  }
  result.summary = json{{"command", "em"},
                        {"K", em.num_bases},
                        {"tau", em.temperature},
                        {"R", em.iterations},
                        {"seed", cfg.seed},
                        {"init", std::string(to_string(em.init))},
                        {"normalize_bases", em.normalize_bases},
                        {"trailing_e_step", em.trailing_e_step},
                        {"rows", x.rows()},
                        {"channels", x.channels()},
                        {"iterations", fit.shifts.size()},
                        {"shifts", real_list(fit.shifts)},
                        {"max_column_error", fit.responsibilities.max_column_error()},
                        {"bases", bases_json},
                        {"warnings", result.warnings}};
  write_text(summary_path, dump(result.summary));
  result.files = {bases, resp, initial, summary_path};
  record_timing(result, cfg, "em", elapsed_ms(start));
  return result;
}

CommandResult cmd_invert(const ExperimentConfig& cfg) {
  prepare_out(cfg);
  const auto start = Clock::now();
  const FeatureMap video = load_features(cfg.input, "input");
  const InversionRun run = run_inversion(video, cfg, cfg.variant, cfg.k_list.front());

  CommandResult result;
  const fs::path top = cfg.out / "z_T.stem";
  const fs::path recon = cfg.out / "reconstruction.stem";
  const fs::path frames_csv = cfg.out / "frames.csv";
  const fs::path summary_path = cfg.out / "invert_summary.json";
  write_tensor(top, to_tensor(run.top.z));
  write_tensor(recon, to_tensor(run.reconstruction.z));
  result.files = {top, recon};

  if (cfg.save_trajectory) {
    Tensor traj;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < run.trajectory.size(); ++i) {
      if (i % cfg.trajectory_stride != 0 && i + 1 != run.trajectory.size()) continue;
      const auto d = run.trajectory[i].z.data();
      traj.data.insert(traj.data.end(), d.begin(), d.end());
      ++kept;
    }
    traj.dims = {kept, video.frames(), video.height(), video.width(), video.channels()};
    const fs::path path = cfg.out / "trajectory.stem";
    write_tensor(path, traj);
    result.files.push_back(path);
  }

  std::ostringstream csv;
  csv << "frame,psnr,ssim\n";
  for (std::size_t n = 0; n < video.frames(); ++n) {
    csv << n << "," << format_real(run.psnr.per_frame[n]) << ","
        << (run.ssim ? format_real(run.ssim->per_frame[n]) : std::string("nan")) << "\n";
  }
  write_text(frames_csv, csv.str());

  result.summary = json{{"command", "invert"},
                        {"variant", std::string(to_string(cfg.variant))},
                        {"predictor", std::string(to_string(cfg.predictor))},
                        {"steps", cfg.steps},
                        {"guidance", cfg.guidance ? json(*cfg.guidance) : json(nullptr)},
                        {"K", cfg.k_list.front()},
                        {"tau", cfg.tau},
                        {"R", cfg.iters},
                        {"seed", cfg.seed},
                        {"peak", cfg.peak},
                        {"final_timestep", run.top.timestep},
                        {"mean_psnr", real(run.psnr.mean)},
                        {"mean_ssim", run.ssim ? real(run.ssim->mean) : json(nullptr)},
                        {"relative_error", real(run.relative_error)},
                        {"temporal_instability", real(run.temporal_instability)},
                        {"attention_flops", flop_json(run.flops)}};
  write_text(summary_path, dump(result.summary));
  result.files.push_back(frames_csv);
  result.files.push_back(summary_path);
  record_timing(result, cfg, "invert", elapsed_ms(start));
  return result;
}

CommandResult cmd_bench(const ExperimentConfig& cfg) {
  prepare_out(cfg);
  CommandResult result;
  dedupe_k(cfg.k_list, result.warnings);
  const std::vector<BenchRow> rows = run_bench(cfg);

  std::ostringstream flops;
  flops << "variant,K,R,N,H,W,C,d,projection_flops,em_flops,score_flops,mixing_flops,"
           "attention_flops,total_flops\n";
  std::ostringstream timing;
  timing << "variant,K,R,N,H,W,C,d,flops,wall_time_ms,min_ms,max_ms,runs\n";
  json rows_json = json::array();
  for (const BenchRow& row : rows) {
    const FlopReport& f = row.flops;
    const std::string name(to_string(row.variant));
    flops << name << "," << row.num_bases << "," << f.iterations << "," << f.frames << ","
          << f.height << "," << f.width << "," << f.channels << "," << f.head_dim << ","
          << f.projection << "," << f.em << "," << f.scores << "," << f.mixing << ","
          << f.attention() << "," << f.total() << "\n";
    timing << name << "," << row.num_bases << "," << f.iterations << "," << f.frames << ","
           << f.height << "," << f.width << "," << f.channels << "," << f.head_dim << ","
           << f.total() << "," << format_real(row.median_ms) << "," << format_real(row.min_ms)
           << "," << format_real(row.max_ms) << "," << row.runs << "\n";
    json entry = flop_json(f);
    entry["K"] = row.num_bases;
    entry["params"] = params_string(f);
    rows_json.push_back(entry);
  }
  const fs::path flops_path = cfg.out / "bench_flops.csv";
  const fs::path timing_path = cfg.out / "bench_timing.csv";
  write_text(flops_path, flops.str());
  write_text(timing_path, timing.str());
  result.files = {flops_path};
  result.timing_files = {timing_path};
  result.summary = json{{"command", "bench"}, {"rows", rows_json}, {"warnings", result.warnings}};
  return result;
}

CommandResult cmd_sweep_k(const ExperimentConfig& cfg) {
  prepare_out(cfg);
  const auto start = Clock::now();
  const FeatureMap video = load_features(cfg.input, "input");
  CommandResult result;
  const std::vector<std::size_t> ks = dedupe_k(cfg.k_list, result.warnings);

  std::ostringstream csv;
  csv << "variant,K,mean_psnr,mean_ssim,flops\n";
  json rows = json::array();
  auto emit = [&](Variant v, std::size_t k, const InversionRun& run) {
    const double ssim_mean = run.ssim ? run.ssim->mean : std::nan("");
    csv << to_string(v) << "," << k << "," << format_real(run.psnr.mean) << ","
        << format_real(ssim_mean) << "," << run.flops.total() << "\n";
    rows.push_back(json{{"variant", std::string(to_string(v))},
                        {"K", k},
                        {"mean_psnr", real(run.psnr.mean)},
                        {"mean_ssim", real(ssim_mean)},
                        {"flops", run.flops.total()}});
  };
  for (std::size_t k : ks) emit(Variant::kStem, k, run_inversion(video, cfg, Variant::kStem, k));
  if (cfg.sweep_baseline) {
    emit(Variant::kAllFrame, 0, run_inversion(video, cfg, Variant::kAllFrame, ks.front()));
  }

  const fs::path csv_path = cfg.out / "sweep.csv";
  const fs::path summary_path = cfg.out / "sweep_summary.json";
  write_text(csv_path, csv.str());
  result.summary = json{{"command", "sweep-k"},
                        {"rows", rows},
                        {"steps", cfg.steps},
                        {"R", cfg.iters},
                        {"tau", cfg.tau},
                        {"seed", cfg.seed},
                        {"warnings", result.warnings}};
  write_text(summary_path, dump(result.summary));
  result.files = {csv_path, summary_path};
  record_timing(result, cfg, "sweep-k", elapsed_ms(start));
  return result;
}

CommandResult cmd_metrics(const ExperimentConfig& cfg) {
  // Validate every requested input before writing anything.
  const bool want_warp = cfg.warp || !cfg.flow.empty();
  if (want_warp && (cfg.flow.empty() || !fs::exists(cfg.flow))) {
    throw ConfigError("warp error requested but flow file " +
                      (cfg.flow.empty() ? std::string("<unset>") : cfg.flow.string()) +
                      " is missing");
  }
  const bool want_cosine = !cfg.features_a.empty() || !cfg.features_b.empty();
  if (want_cosine && (cfg.features_a.empty() || cfg.features_b.empty())) {
    throw ConfigError("cosine map needs both features_a and features_b");
  }
  const FeatureMap a = load_features(cfg.input, "input");
  const FeatureMap b = load_features(cfg.reference, "reference");
  std::optional<FlowField> flow;
  if (want_warp) {
    const Tensor t = read_tensor(cfg.flow);
    if (t.dims.size() != 4 || t.dims[3] != 2) throw ShapeError("flow must be (N-1, H, W, 2)");
    flow.emplace(t.dims[0], t.dims[1], t.dims[2], t.data);
  }
  std::optional<FeatureMap> fa, fb;
  if (want_cosine) {
    fa = load_features(cfg.features_a, "features_a");
    fb = load_features(cfg.features_b, "features_b");
  }

  const MetricReport p = psnr_per_frame(a, b, cfg.peak);
  const MetricReport s = ssim_per_frame(a, b, cfg.peak);
  std::optional<MetricReport> warp;
  if (flow) warp = warp_error(a, *flow);
  std::vector<CosineMap> cos;
  if (want_cosine) {
    for (std::size_t n = 0; n < fa->frames(); ++n) cos.push_back(cosine_similarity_map(*fa, *fb, n));
  }

  prepare_out(cfg);
  CommandResult result;
  std::ostringstream csv;
  csv << "frame,psnr,ssim\n";
  for (std::size_t n = 0; n < a.frames(); ++n) {
    csv << n << "," << format_real(p.per_frame[n]) << "," << format_real(s.per_frame[n]) << "\n";
  }
  const fs::path metrics_csv = cfg.out / "metrics.csv";
  write_text(metrics_csv, csv.str());
  result.files.push_back(metrics_csv);

  result.summary = json{{"command", "metrics"},
                        {"peak", cfg.peak},
                        {"psnr", real_list(p.per_frame)},
                        {"mean_psnr", real(p.mean)},
                        {"ssim", real_list(s.per_frame)},
                        {"mean_ssim", real(s.mean)}};
  if (warp) {
    std::ostringstream wcsv;
    wcsv << "pair,warp_error\n";
    for (std::size_t n = 0; n < warp->per_frame.size(); ++n) {
      wcsv << n << "," << format_real(warp->per_frame[n]) << "\n";
    }
    const fs::path path = cfg.out / "warp.csv";
    write_text(path, wcsv.str());
    result.files.push_back(path);
    result.summary["warp_error"] = real_list(warp->per_frame);
    result.summary["mean_warp_error"] = real(warp->mean);
  }
  if (want_cosine) {
    Tensor maps{{fa->frames(), fa->height(), fa->width()}, {}};
    std::ostringstream ccsv;
    ccsv << "frame,mean_cosine\n";
    std::vector<double> means;
    for (std::size_t n = 0; n < cos.size(); ++n) {
      const Matrix& m = cos[n].map;
      maps.data.insert(maps.data.end(), m.data(), m.data() + m.size());
      ccsv << n << "," << format_real(cos[n].mean) << "\n";
      means.push_back(cos[n].mean);
    }
    const fs::path map_path = cfg.out / "cosine.stem";
    const fs::path csv_path = cfg.out / "cosine.csv";
    write_tensor(map_path, maps);
    write_text(csv_path, ccsv.str());
    result.files.push_back(map_path);
    result.files.push_back(csv_path);
    result.summary["cosine_mean"] = real_list(means);
  }
  const fs::path summary_path = cfg.out / "metrics_summary.json";
  write_text(summary_path, dump(result.summary));
  result.files.push_back(summary_path);
  return result;
}

CommandResult gen_synthetic(const ExperimentConfig& cfg) {
  prepare_out(cfg);
  Rng rng(Seed{cfg.seed});
  CommandResult result;
  result.summary = json{{"command", "gen"},
                        {"kind", std::string(to_string(cfg.gen_kind))},
                        {"seed", cfg.seed}};

  switch (cfg.gen_kind) {
    case SyntheticKind::kClusters: {
      const std::size_t c = cfg.channels;
      Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(cfg.centers), static_cast<Eigen::Index>(c));
      for (std::size_t j = 0; j < cfg.centers; ++j) {
        const double scale = cfg.separation * (1.0 + static_cast<double>(j / c));
        centers(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j % c)) = static_cast<float>(scale);
      }
      Matrix rows(static_cast<Eigen::Index>(cfg.centers * cfg.points), static_cast<Eigen::Index>(c));
      for (std::size_t j = 0; j < cfg.centers; ++j) {
        for (std::size_t p = 0; p < cfg.points; ++p) {
          const auto r = static_cast<Eigen::Index>(j * cfg.points + p);
          for (std::size_t ch = 0; ch < c; ++ch) {
            rows(r, static_cast<Eigen::Index>(ch)) =
                centers(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(ch)) +
                static_cast<float>(cfg.sigma * rng.normal());
          }
        }
      }
      const fs::path path = cfg.out / "clusters.stem";
      write_tensor(path, to_tensor(rows));
      result.files.push_back(path);
      json cj = json::array();
      for (Eigen::Index j = 0; j < centers.rows(); ++j) {
        json row = json::array();
        for (Eigen::Index ch = 0; ch < centers.cols(); ++ch) row.push_back(centers(j, ch));
        cj.push_back(row);
      }
      result.summary["centers"] = cj;
      result.summary["points_per_center"] = cfg.points;
      result.summary["sigma"] = cfg.sigma;
      break;
    }
    case SyntheticKind::kPerturbedVideo: {
      const std::size_t hw = cfg.height * cfg.width;
      const Matrix base = random_normal(rng, static_cast<Eigen::Index>(hw),
                                        static_cast<Eigen::Index>(cfg.channels));
      std::vector<float> data;
      data.reserve(cfg.frames * hw * cfg.channels);
      for (std::size_t n = 0; n < cfg.frames; ++n) {
        for (Eigen::Index i = 0; i < base.size(); ++i) {
          const double noise = cfg.sigma > 0.0 ? cfg.sigma * rng.normal() : 0.0;
          data.push_back(static_cast<float>(base.data()[i] + noise));
        }
      }
      const fs::path path = cfg.out / "video.stem";
      write_tensor(path, Tensor{{cfg.frames, cfg.height, cfg.width, cfg.channels}, std::move(data)});
      result.files.push_back(path);
      result.summary["sigma"] = cfg.sigma;
      break;
    }
    case SyntheticKind::kMovingBlob: {
      // Blob centre moves +1 px in x per frame, so frame n+1 is frame n
      // shifted right by exactly one pixel.
      const double cy = std::floor(static_cast<double>(cfg.height) / 2.0);
      const double cx = std::floor(static_cast<double>(cfg.width) / 4.0);
      const double r2 = 2.0 * cfg.blob_radius * cfg.blob_radius;
      std::vector<float> data;
      data.reserve(cfg.frames * cfg.height * cfg.width * cfg.channels);
      for (std::size_t n = 0; n < cfg.frames; ++n) {
        for (std::size_t y = 0; y < cfg.height; ++y) {
          for (std::size_t x = 0; x < cfg.width; ++x) {
            const double dx = static_cast<double>(x) - static_cast<double>(n) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double v = std::exp(-(dx * dx + dy * dy) / r2);
            for (std::size_t c = 0; c < cfg.channels; ++c) {
              data.push_back(static_cast<float>(v / static_cast<double>(c + 1)));
            }
          }
        }
      }
      const fs::path video = cfg.out / "video.stem";
      const fs::path flow = cfg.out / "flow.stem";
      write_tensor(video, Tensor{{cfg.frames, cfg.height, cfg.width, cfg.channels}, std::move(data)});
      const std::size_t pairs = cfg.frames > 0 ? cfg.frames - 1 : 0;
      const FlowField field = FlowField::constant(pairs, cfg.height, cfg.width, 1.0f, 0.0f);
      write_tensor(flow, Tensor{{pairs, cfg.height, cfg.width, 2},
                                std::vector<float>(field.data().begin(), field.data().end())});
      result.files = {video, flow};
      result.summary["blob_radius"] = cfg.blob_radius;
      result.summary["flow"] = json::array({1.0, 0.0});
      break;
    }
  }
  result.summary["dims"] = json{{"frames", cfg.frames},
                                {"height", cfg.height},
                                {"width", cfg.width},
                                {"channels", cfg.channels}};
  const fs::path summary_path = cfg.out / "gen_summary.json";
  write_text(summary_path, dump(result.summary));
  result.files.push_back(summary_path);
  return result;
}

}  // namespace stem
