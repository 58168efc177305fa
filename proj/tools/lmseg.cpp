// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0

// lmseg: convert meshes, train, infer, evaluate, benchmark samplers and
// generate synthetic tiles.
//
// Exit codes: 0 ok, 2 parse error, 3 empty or invalid data, 4 feature spec
// mismatch, 5 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lmseg.hpp"

namespace fs = std::filesystem;
using namespace lmseg;

namespace {

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError:
    case ErrorCode::UnsupportedFormat:
      return 2;
    case ErrorCode::SpecMismatch:
      return 4;
    case ErrorCode::NonFiniteValue:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
      return 5;
    default:
      return 3;
  }
}

FeatureSpec parse_features(const std::string& s) {
  FeatureSpec spec{false, false};
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "hsv") spec.use_hsv = true;
    else if (tok == "normals") spec.use_normals = true;
    else if (!tok.empty()) fail(ErrorCode::InvalidFeatureSpec, "unknown feature block '" + tok + "'");
  }
  if (spec.channels() == 0) fail(ErrorCode::InvalidFeatureSpec, "no feature block selected");
  return spec;
}

bool is_bdg(const fs::path& p) { return detail::lowercase(p.extension().string()) == ".bdg"; }

bool is_mesh(const fs::path& p) {
  const std::string e = detail::lowercase(p.extension().string());
  return e == ".ply" || e == ".obj";
}

/// Graph for learning: .bdg files are taken as stored, meshes are converted
/// with `spec` and normalized.
DualGraph load_graph(const fs::path& p, const FeatureSpec& spec, TriMesh* mesh_out = nullptr) {
  if (is_bdg(p)) return load_bdg(p);
  TriMesh mesh = load_mesh(p);
  BuildStats stats;
  DualGraph g = normalize_scale(build_dual(mesh, spec, &stats));
  if (stats.hsv_zero_filled) std::cerr << "warning: " << p.string() << " has no colors; HSV block zero-filled\n";
  if (mesh_out) *mesh_out = std::move(mesh);
  return g;
}

std::vector<fs::path> list_inputs(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && (is_bdg(e.path()) || is_mesh(e.path()))) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::EmptyMesh, "no .bdg, .ply or .obj files in '" + dir.string() + "'");
  return files;
}

/// Per-face labels from a labeled mesh, a .bdg graph, or a CSV whose first
/// two columns are face_index,label.
std::vector<int> load_labels(const fs::path& p) {
  const std::string ext = detail::lowercase(p.extension().string());
  if (ext == ".csv") {
    std::ifstream in(p);
    if (!in) fail(ErrorCode::IoError, "cannot open '" + p.string() + "'");
    std::vector<std::pair<long, int>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || (line_no == 1 && line.find_first_not_of("0123456789-,. \r") != std::string::npos)) continue;
      long idx = 0;
      int lab = 0;
      if (std::sscanf(line.c_str(), "%ld,%d", &idx, &lab) != 2) {
        fail(ErrorCode::ParseError, p.string() + ":" + std::to_string(line_no) + ": expected face_index,label");
      }
      rows.emplace_back(idx, lab);
    }
    std::vector<int> out(rows.size(), -1);
    for (const auto& [idx, lab] : rows) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= out.size()) fail(ErrorCode::ParseError, "face index out of range in " + p.string());
      out[static_cast<std::size_t>(idx)] = lab;
    }
    return out;
  }
  if (ext == ".bdg") {
    DualGraph g = load_bdg(p);
    if (!g.labels) fail(ErrorCode::InvalidLabel, "'" + p.string() + "' carries no labels");
    return *g.labels;
  }
  TriMesh m = load_mesh(p);
  if (!m.face_labels) fail(ErrorCode::InvalidLabel, "'" + p.string() + "' carries no face labels");
  return *m.face_labels;
}

void print_report(const SegReport& r, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "class       IoU  recall\n";
  for (std::size_t k = 0; k < r.num_classes; ++k) {
    out << std::setw(5) << k << "  ";
    if (r.present[k]) out << std::setw(8) << r.per_class_iou[k] << std::setw(8) << r.per_class_recall[k] << "\n";
    else out << "       -       -\n";
  }
  out << "mIoU " << r.miou << "  OA " << r.oa << "  mAcc " << r.macc << "  F1 " << r.f1 << "\n";
  nlohmann::json j = {{"miou", r.miou}, {"oa", r.oa}, {"macc", r.macc}, {"f1", r.f1}, {"per_class_iou", r.per_class_iou}};
  out << j.dump() << "\n";
  for (std::size_t k = 0; k < r.num_classes; ++k) {
    if (!r.present[k]) continue;
    out << nlohmann::json{{"class", k}, {"iou", r.per_class_iou[k]}, {"recall", r.per_class_recall[k]}}.dump() << "\n";
  }
}

int cmd_convert(const fs::path& input, const fs::path& output, const std::string& features, bool normalize) {
  const FeatureSpec spec = parse_features(features);
  LoadStats ls;
  const TriMesh mesh = load_mesh(input, MeshFormat::Auto, &ls);
  BuildStats bs;
  DualGraph g = build_dual(mesh, spec, &bs);
  if (bs.hsv_zero_filled) std::cerr << "warning: mesh has no colors; HSV block zero-filled\n";
  if (ls.dropped_degenerate > 0) std::cerr << "warning: dropped " << ls.dropped_degenerate << " degenerate faces\n";
  if (bs.adjacency.non_manifold_edges > 0) {
    std::cerr << "warning: " << bs.adjacency.non_manifold_edges << " non-manifold edges; every face pairing on them is linked\n";
  }
  if (normalize) g = normalize_scale(std::move(g));
  save_bdg(output, g);
  std::cout << "N " << g.num_nodes() << "\nedges " << g.edges.size() << "\ndegree";
  const auto hist = degree_histogram(g);
  for (std::size_t d = 0; d < hist.size(); ++d) std::cout << " " << d << ":" << hist[d];
  std::cout << "\n";
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& val_dir, const fs::path& out,
              fs::path metrics, long epochs, bool quiet) {
  RunConfig rc = config.empty() ? RunConfig{} : load_run_config(config);
  if (config.empty()) apply_seed_override(rc);
  if (epochs > 0) rc.train.epochs = static_cast<std::size_t>(epochs);
  std::vector<DualGraph> train_set, val_set;
  for (const auto& p : list_inputs(data)) train_set.push_back(load_graph(p, rc.arch.feature_spec));
  if (!val_dir.empty()) {
    for (const auto& p : list_inputs(val_dir)) val_set.push_back(load_graph(p, rc.arch.feature_spec));
  }
  for (const auto& g : train_set) {
    if (!(g.feature_spec == rc.arch.feature_spec)) fail(ErrorCode::SpecMismatch, "feature spec mismatch");
  }
  if (metrics.empty()) metrics = fs::path(out.string() + ".csv");
  std::ofstream csv(metrics);
  if (!csv) fail(ErrorCode::IoError, "cannot open '" + metrics.string() + "' for writing");
  csv << "epoch,loss,miou,oa,macc,f1\n";

  LMSeg<float> model(rc.arch, rc.train.seed);
  if (!quiet) std::cerr << "parameters " << model.param_count() << ", train tiles " << train_set.size() << "\n";
  TrainHooks<float> hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    csv << r.epoch << "," << std::setprecision(9) << r.loss << "," << r.miou << "," << r.oa << "," << r.macc << "," << r.f1
        << "\n";
    csv.flush();
    if (!quiet) {
      std::cerr << "epoch " << r.epoch << " loss " << r.loss << " mIoU " << r.miou << " (" << std::setprecision(1)
                << std::fixed << r.seconds << "s)\n"
                << std::defaultfloat;
    }
  };
  hooks.on_best = [&](const LMSeg<float>& m, std::uint64_t step) { save_checkpoint(out, m, &step); };
  const TrainResult res = train<float>(model, train_set, val_set, rc.train, hooks);
  std::cout << "best mIoU " << res.best_miou << " at epoch " << res.best_epoch << "\n";
  return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& input, const fs::path& output, std::uint64_t seed) {
  LoadedModel<float> lm = load_checkpoint<float>(ckpt);
  const ArchConfig& arch = lm.model->config();
  TriMesh mesh;
  const bool mesh_input = is_mesh(input);
  DualGraph g = load_graph(input, arch.feature_spec, mesh_input ? &mesh : nullptr);
  if (!(g.feature_spec == arch.feature_spec)) fail(ErrorCode::SpecMismatch, "feature spec mismatch");
  const Prediction pred = predict(*lm.model, g, seed);
  const std::string ext = detail::lowercase(output.extension().string());
  if (ext == ".csv") {
    std::ofstream out(output);
    if (!out) fail(ErrorCode::IoError, "cannot open '" + output.string() + "' for writing");
    out << "face_index,label,confidence\n";
    for (std::size_t i = 0; i < pred.labels.size(); ++i) out << i << "," << pred.labels[i] << "," << pred.confidence[i] << "\n";
  } else if (ext == ".ply") {
    if (!mesh_input) fail(ErrorCode::InvalidConfig, "PLY output needs a mesh input; use .csv for .bdg inputs");
    mesh.face_labels = pred.labels;
    PlyWriteOptions opts;
    opts.face_confidence = pred.confidence;
    save_ply(output, mesh, opts);
  } else {
    fail(ErrorCode::InvalidConfig, "output must end in .ply or .csv");
  }
  std::cout << "faces " << pred.labels.size() << "\n";
  return 0;
}

int cmd_eval(const fs::path& pred_path, const fs::path& gt_path, std::size_t classes) {
  const std::vector<int> pred = load_labels(pred_path);
  const std::vector<int> gt = load_labels(gt_path);
  std::size_t k = classes;
  if (k == 0) {
    int mx = 1;
    for (int v : pred) mx = std::max(mx, v);
    for (int v : gt) mx = std::max(mx, v);
    k = static_cast<std::size_t>(mx) + 1;
  }
  print_report(evaluate(pred, gt, k), std::cout);
  return 0;
}

int cmd_bench(const std::vector<std::string>& methods, const std::vector<std::size_t>& sizes, const fs::path& out,
              std::uint64_t seed, double min_seconds) {
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) fail(ErrorCode::IoError, "cannot open '" + out.string() + "' for writing");
  }
  std::ostream& csv = out.empty() ? std::cout : file;
  csv << "method,N,k,seconds\n";
  for (const auto& m : methods) {
    std::vector<BenchRow> rows;
    for (std::size_t n : sizes) {
      rows.push_back(bench_subsample(m, n, seed, min_seconds));
      const BenchRow& r = rows.back();
      csv << r.method << "," << r.n << "," << r.k << "," << std::setprecision(6) << std::scientific << r.seconds << "\n"
          << std::defaultfloat;
    }
    if (rows.size() >= 2) std::cerr << m << " log-log slope " << loglog_slope(rows) << "\n";
  }
  return 0;
}

int cmd_synth(std::size_t tiles, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  const auto meshes = synth_dataset(tiles, seed);
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    std::ostringstream name;
    name << "tile_" << std::setw(3) << std::setfill('0') << i << ".ply";
    save_ply(dir / name.str(), meshes[i]);
  }
  std::cout << "wrote " << meshes.size() << " tiles to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic segmentation of landscape meshes on barycentric dual graphs"};
  app.require_subcommand(1);

  auto* convert = app.add_subcommand("convert", "Mesh to .bdg dual graph");
  std::string conv_in, conv_out, features = "hsv,normals";
  bool normalize = false;
  convert->add_option("--input", conv_in, "OBJ or PLY mesh")->required()->check(CLI::ExistingFile);
  convert->add_option("--output", conv_out, "Destination .bdg")->required();
  convert->add_option("--features", features, "Comma list of hsv,normals")->capture_default_str();
  convert->add_flag("--normalize", normalize, "Center and scale positions into [-1,1]");

  auto* trainc = app.add_subcommand("train", "Train a model");
  std::string config, data, val, out, metrics;
  long epochs = 0;
  bool quiet = false, verbose = false;
  trainc->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
  trainc->add_option("--data", data, "Directory of training .bdg/.ply/.obj files")->required();
  trainc->add_option("--val", val, "Directory of validation files");
  trainc->add_option("--out", out, "Checkpoint path (best validation mIoU)")->required();
  trainc->add_option("--metrics", metrics, "Metric CSV (default <out>.csv)");
  trainc->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::PositiveNumber);
  auto* q = trainc->add_flag("--quiet", quiet, "No progress output");
  trainc->add_flag("--verbose", verbose, "Per-epoch progress (default)")->excludes(q);

  auto* infer = app.add_subcommand("infer", "Predict per-face labels");
  std::string ckpt, inf_in, inf_out;
  std::uint64_t inf_seed = 20240611;
  infer->add_option("--checkpoint", ckpt, "LMSC1 checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", inf_in, "Mesh or .bdg")->required()->check(CLI::ExistingFile);
  infer->add_option("--output", inf_out, "Output .ply or .csv")->required();
  infer->add_option("--seed", inf_seed, "Sub-sampling seed")->capture_default_str();

  auto* evalc = app.add_subcommand("eval", "Score predictions against ground truth");
  std::string pred, gt;
  std::size_t classes = 0;
  evalc->add_option("--pred", pred, "Predicted labels (.ply/.obj/.bdg/.csv)")->required()->check(CLI::ExistingFile);
  evalc->add_option("--gt", gt, "Ground-truth labels (.ply/.obj/.bdg/.csv)")->required()->check(CLI::ExistingFile);
  evalc->add_option("--classes", classes, "Class count (default: inferred)");

  auto* bench = app.add_subcommand("bench", "Time random vs farthest-point sub-sampling");
  std::vector<std::string> methods{"random", "fps"};
  std::vector<std::size_t> sizes{1000, 10000, 100000};
  std::string bench_out;
  std::uint64_t bench_seed = 0;
  double min_seconds = 0.05;
  bench->add_option("--method", methods, "random and/or fps")->check(CLI::IsMember({"random", "fps"}))->delimiter(',');
  bench->add_option("--sizes", sizes, "Comma list of point counts")->delimiter(',');
  bench->add_option("--out", bench_out, "CSV path (default stdout)");
  bench->add_option("--seed", bench_seed, "Point-set seed");
  bench->add_option("--min-seconds", min_seconds, "Minimum timing window per size")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate labeled synthetic tiles as PLY");
  std::size_t tiles = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--tiles", tiles, "Number of tiles")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*convert) return cmd_convert(conv_in, conv_out, features, normalize);
    if (*trainc) return cmd_train(config, data, val, out, metrics, epochs, quiet);
    if (*infer) return cmd_infer(ckpt, inf_in, inf_out, inf_seed);
    if (*evalc) return cmd_eval(pred, gt, classes);
    if (*bench) return cmd_bench(methods, sizes, bench_out, bench_seed, min_seconds);
    if (*synth) return cmd_synth(tiles, synth_seed, synth_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
