#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evstr/io/bench.hpp"
#include "evstr/io/csv.hpp"
#include "evstr/io/metrics.hpp"
#include "evstr/io/text.hpp"
#include "evstr/synth/generator.hpp"
#include "evstr/vo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace evstr;

namespace {

void report_error(std::string_view category, std::string_view message) {
  const nlohmann::json j{{"error", category}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

// Writes through a buffer so that a failed run leaves no partial file.
template <class F>
void write_output(const std::string& path, F&& f) {
  std::ostringstream buf;
  f(buf);
  if (path == "-") {
    std::cout << buf.str();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCategory::kIo, "cannot write " + path);
  out << buf.str();
  out.flush();
  if (!out) raise(ErrorCategory::kIo, "write failed: " + path);
}

Eigen::Vector3d parse_vector(const std::vector<double>& v, const std::string& name) {
  if (v.size() != 3) raise(ErrorCategory::kInvalidArgument, name + " needs three components");
  return {v[0], v[1], v[2]};
}

struct EstimateArgs {
  std::string events, calib, method = "str", out;
  std::size_t batch_size = 20000;
  double batch_ms = 0.0;
  std::size_t max_batches = 0;
};

void run_estimate(const EstimateArgs& a) {
  const std::vector<Event> stream = io::read_events(a.events);
  const CameraIntrinsics intr = io::read_calibration(a.calib);
  io::EstimateConfig cfg;
  cfg.method = io::parse_method(a.method);
  cfg.batch_size = a.batch_size;
  if (a.batch_ms > 0.0) cfg.batch_duration = a.batch_ms * 1e-3;
  if (a.max_batches > 0) cfg.max_batches = a.max_batches;
  const std::vector<io::BatchEstimate> rows = io::estimate_batches(stream, intr, cfg);
  write_output(a.out, [&](std::ostream& o) { io::write_estimates_csv(o, rows); });
  std::size_t solved = 0;
  for (const auto& r : rows) solved += r.solved;
  std::cout << "batches " << rows.size() << " solved " << solved << '\n';
}

struct VoArgs {
  std::string events, calib, gt, out;
  bool no_averaging = false;
  std::size_t batch_size = 30000;
  std::size_t key_threshold = 2000;
};

void run_vo(const VoArgs& a) {
  const std::vector<Event> stream = io::read_events(a.events);
  const CameraIntrinsics intr = io::read_calibration(a.calib);
  std::vector<TrajectoryRecord> gt;
  if (!a.gt.empty()) gt = io::read_trajectory(a.gt);
  VoConfig cfg;
  cfg.batch_size = a.batch_size;
  cfg.key_threshold = a.key_threshold;
  const auto started = std::chrono::steady_clock::now();
  const VoResult r = vo_run(stream, intr, cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const std::vector<TrajectoryRecord>& traj = a.no_averaging ? r.chained : r.averaged;
  std::optional<io::OrientationErrors> errors;
  if (!gt.empty() && !traj.empty()) errors = io::absolute_orientation_error(traj, gt);
  write_output(a.out, [&](std::ostream& o) {
    io::write_trajectory_csv(o, traj, errors ? &*errors : nullptr);
  });
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "batches " << r.batches.size() << " segments " << r.segments << " poses "
            << traj.size() << " events_per_s "
            << (seconds > 0.0 ? static_cast<double>(stream.size()) / seconds : 0.0) << '\n';
  if (errors) std::cout << "mean_error_deg " << errors->mean << '\n';
}

struct SynthArgs {
  std::string preset = "const", out_dir;
  double duration = 10.0, rate = 200000.0, speed = 1.0, segment = 2.0;
  std::vector<double> omega{0.0, 0.0, 0.5};
  std::size_t landmarks = 2000;
  std::uint64_t seed = 1;
  double sigma = 0.0, outliers = 0.0, jitter = 0.0;
  bool quantize = false;
};

void run_synth(const SynthArgs& a) {
  if (!(a.duration > 0.0) || !(a.segment > 0.0)) {
    raise(ErrorCategory::kInvalidArgument, "durations must be positive");
  }
  std::vector<synth::MotionSegment> segments;
  if (a.preset == "const") {
    segments.push_back({a.duration, parse_vector(a.omega, "--omega")});
  } else if (a.preset == "script") {
    // Piecewise-constant velocity of magnitude `speed`, a fresh random
    // direction every `segment` seconds.
    std::mt19937_64 rng(a.seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double t = 0.0; t < a.duration; t += a.segment) {
      const Eigen::Vector3d dir = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
      segments.push_back({std::min(a.segment, a.duration - t), a.speed * dir});
    }
  } else {
    raise(ErrorCategory::kInvalidArgument, "unknown preset '" + a.preset + "'");
  }
  const synth::MotionScript script(segments);
  const CameraIntrinsics intr(200, 200, 120, 90, 0, 0, {240, 180});
  synth::StreamConfig cfg;
  cfg.event_rate = a.rate;
  cfg.noise.pixel_sigma = a.sigma;
  cfg.noise.outlier_fraction = a.outliers;
  if (a.jitter > 0.0) cfg.noise.time_jitter = a.jitter;
  cfg.noise.quantize = a.quantize;
  const synth::SyntheticStream s = synth::generate_stream(
      synth::SceneModel::sphere(a.landmarks, a.seed), script, intr, cfg, a.seed + 1);
  fs::create_directories(a.out_dir);
  io::write_events(fs::path(a.out_dir) / "events.txt", s.events);
  io::write_trajectory(fs::path(a.out_dir) / "groundtruth.txt", s.trajectory);
  io::write_calibration(fs::path(a.out_dir) / "calib.txt", intr);
  std::cout << "events " << s.events.size() << " poses " << s.trajectory.size() << '\n';
}

struct BenchArgs {
  std::string events, calib, gt, out, sequence;
  std::vector<std::size_t> sizes{10000, 15000, 20000, 25000, 30000};
  std::vector<std::string> methods{"str", "cm"};
  std::size_t max_batches = 0;
};

void run_bench(const BenchArgs& a) {
  const std::vector<Event> stream = io::read_events(a.events);
  const CameraIntrinsics intr = io::read_calibration(a.calib);
  const std::vector<TrajectoryRecord> gt = io::read_trajectory(a.gt);
  io::BenchConfig cfg;
  cfg.batch_sizes = a.sizes;
  cfg.methods.clear();
  for (const std::string& m : a.methods) cfg.methods.push_back(io::parse_method(m));
  if (a.max_batches > 0) cfg.max_batches = a.max_batches;
  const std::string name =
      a.sequence.empty() ? fs::path(a.events).parent_path().filename().string() : a.sequence;
  const std::vector<io::BenchRow> rows = io::run_bench(name, stream, intr, gt, cfg);
  write_output(a.out, [&](std::ostream& o) { io::write_bench_csv(o, rows); });
  std::cout << "rows " << rows.size() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera rotation estimation"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand("estimate", "Per-batch angular velocity");
  estimate->add_option("--events", est.events, "Event file (t x y p)")->required();
  estimate->add_option("--calib", est.calib, "Calibration file")->required();
  estimate->add_option("--method", est.method, "str or cm")->check(CLI::IsMember({"str", "cm"}));
  estimate->add_option("--batch-size", est.batch_size, "Events per batch")
      ->check(CLI::PositiveNumber);
  estimate->add_option("--batch-duration", est.batch_ms, "Batch length in ms instead of a count")
      ->check(CLI::PositiveNumber);
  estimate->add_option("--max-batches", est.max_batches, "Stop after this many batches");
  estimate->add_option("--out", est.out, "CSV path or -")->required();

  VoArgs vo;
  CLI::App* vo_cmd = app.add_subcommand("vo", "Rotational visual odometry");
  vo_cmd->add_option("--events", vo.events, "Event file (t x y p)")->required();
  vo_cmd->add_option("--calib", vo.calib, "Calibration file")->required();
  vo_cmd->add_option("--gt", vo.gt, "Ground-truth trajectory for the error column");
  vo_cmd->add_flag("--no-averaging", vo.no_averaging, "Output the chained trajectory");
  vo_cmd->add_option("--batch-size", vo.batch_size, "Events per batch");
  vo_cmd->add_option("--key-threshold", vo.key_threshold, "Surviving tracks for a key batch");
  vo_cmd->add_option("--out", vo.out, "CSV path or -")->required();

  SynthArgs syn;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic event stream");
  synth_cmd->add_option("--preset", syn.preset, "const or script")
      ->check(CLI::IsMember({"const", "script"}));
  synth_cmd->add_option("--out-dir", syn.out_dir, "Output directory")->required();
  synth_cmd->add_option("--duration", syn.duration, "Seconds");
  synth_cmd->add_option("--rate", syn.rate, "Events per second");
  synth_cmd->add_option("--omega", syn.omega, "Velocity for const, rad/s")->delimiter(',');
  synth_cmd->add_option("--speed", syn.speed, "Speed for script, rad/s");
  synth_cmd->add_option("--segment", syn.segment, "Script segment length, s");
  synth_cmd->add_option("--landmarks", syn.landmarks, "Scene points");
  synth_cmd->add_option("--seed", syn.seed, "Random seed");
  synth_cmd->add_option("--sigma", syn.sigma, "Pixel noise, px");
  synth_cmd->add_option("--outliers", syn.outliers, "Outlier fraction");
  synth_cmd->add_option("--jitter", syn.jitter, "Time stamp jitter, s");
  synth_cmd->add_flag("--quantize", syn.quantize, "Round pixels");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Error and runtime over batch sizes");
  bench_cmd->add_option("--events", bench.events, "Event file (t x y p)")->required();
  bench_cmd->add_option("--calib", bench.calib, "Calibration file")->required();
  bench_cmd->add_option("--gt", bench.gt, "Ground-truth trajectory")->required();
  bench_cmd->add_option("--batch-sizes", bench.sizes, "Comma-separated sizes")->delimiter(',');
  bench_cmd->add_option("--methods", bench.methods, "Comma-separated methods")->delimiter(',');
  bench_cmd->add_option("--max-batches", bench.max_batches, "Batches per size and method");
  bench_cmd->add_option("--sequence", bench.sequence, "Sequence id for the rows");
  bench_cmd->add_option("--out", bench.out, "CSV path or -")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) report_error(to_string(ErrorCategory::kInvalidArgument), e.what());
    return app.exit(e, std::cout, std::cerr);
  }

  try {
    if (*estimate) run_estimate(est);
    if (*vo_cmd) run_vo(vo);
    if (*synth_cmd) run_synth(syn);
    if (*bench_cmd) run_bench(bench);
  } catch (const Error& e) {
    report_error(to_string(e.category()), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}
