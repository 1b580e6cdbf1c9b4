#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "demea/autoencoder.hpp"
#include "demea/checkpoint.hpp"
#include "demea/gradcheck.hpp"
#include "demea/hierarchy_io.hpp"
#include "demea/latent_ops.hpp"
#include "demea/synthetic.hpp"

namespace demea::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Input problems detected by the command itself rather than the library.
class UsageError : public Error {
 public:
  using Error::Error;
};

void write_run_manifest(const fs::path& out_dir, const std::string& command, const std::vector<std::string>& args,
                        const std::string& config, const std::string& data, std::uint64_t seed) {
  json j;
  j["command"] = command;
  j["arguments"] = args;
  j["config"] = config;
  j["data"] = data;
  j["output"] = out_dir.string();
  j["seed"] = seed;
  std::ofstream out(out_dir / "run_manifest.json");
  if (!out) throw IoError("cannot write " + (out_dir / "run_manifest.json").string());
  out << j.dump(2) << '\n';
}

std::vector<fs::path> obj_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".obj") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no .obj files in " + dir.string());
  return files;
}

// Loads a mesh that must share the template's connectivity.
std::vector<Vec3> load_pose(const fs::path& path, const Mesh& tmpl) {
  Mesh m = load_mesh(path);
  if (m.vertex_count() != tmpl.vertex_count() || m.faces() != tmpl.faces()) {
    throw UsageError(path.string() + ": connectivity differs from the template (" + std::to_string(m.vertex_count()) +
                     " vs " + std::to_string(tmpl.vertex_count()) + " vertices)");
  }
  return m.vertices();
}

void save_pose(const Mesh& tmpl, std::vector<Vec3> vertices, const fs::path& path) {
  save_mesh(Mesh(std::move(vertices), tmpl.faces()), path);
}

struct LoadedModel {
  ModelConfig config;
  std::unique_ptr<Autoencoder<float>> model;
};

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

// The config sits next to the checkpoint; its hierarchy path is relative to it.
LoadedModel load_model(const fs::path& ckpt) {
  const fs::path dir = ckpt.parent_path().empty() ? fs::path(".") : ckpt.parent_path();
  const fs::path cfg_path = dir / "config.json";
  if (!fs::exists(cfg_path)) throw UsageError("no config.json next to " + ckpt.string());
  LoadedModel lm;
  lm.config = load_config(cfg_path);
  if (lm.config.hierarchy.empty()) throw UsageError(cfg_path.string() + ": no hierarchy given");
  auto topo = make_topology(load_artifact(resolve(dir, lm.config.hierarchy)));
  lm.model = std::make_unique<Autoencoder<float>>(std::move(topo), lm.config);
  load_checkpoint(lm.model->parameters(), ckpt);
  return lm;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + item + "' in list '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

// ---------------------------------------------------------------------------------------

int cmd_template(const std::string& shape, std::size_t subdivisions, const fs::path& out) {
  Mesh m;
  if (shape == "bar") {
    m = make_bar(25, 6, 6, Vec3(4, 1, 1));
  } else if (shape == "icosphere") {
    m = make_icosphere(subdivisions);
  } else if (shape == "uvsphere") {
    m = make_uv_sphere(83, 84);
  } else {
    throw UsageError("unknown shape '" + shape + "' (bar, icosphere, uvsphere)");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_mesh(m, out);
  std::cerr << "wrote " << out.string() << " (" << m.vertex_count() << " vertices, " << m.faces().size() << " faces)\n";
  return kExitOk;
}

int cmd_build_hierarchy(const fs::path& mesh_path, std::size_t graph_nodes, const std::string& levels,
                        std::size_t spiral_length, const fs::path& out) {
  const Mesh mesh = load_mesh(mesh_path);
  std::vector<std::size_t> counts;
  for (double v : parse_list(levels)) {
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw UsageError("level counts must be positive integers");
    }
    counts.push_back(static_cast<std::size_t>(v));
  }
  std::cerr << "extracting a " << graph_nodes << "-node deformation graph\n";
  DeformationGraph graph = extract_graph(mesh, graph_nodes);
  std::cerr << "simplifying\n";
  MeshHierarchy h = build_hierarchy(mesh, &graph, counts);
  const HierarchyArtifact artifact = make_artifact(std::move(h), std::move(graph), spiral_length);
  save_artifact(artifact, out);

  std::printf("%-6s %10s %10s %8s\n", "level", "vertices", "faces", "spiral");
  for (std::size_t k = 0; k < artifact.hierarchy.levels.size(); ++k) {
    const auto& lv = artifact.hierarchy.levels[k];
    std::printf("%-6zu %10zu %10zu %8zu%s\n", k, lv.vertex_count(), lv.mesh.faces().size(), artifact.spirals[k].length,
                static_cast<int>(k) == artifact.hierarchy.graph_level ? "  (graph)" : "");
  }
  std::printf("graph nodes %zu, edges %zu\n", artifact.graph.node_count(), artifact.graph.edges.size());
  return kExitOk;
}

int cmd_synth(const fs::path& hierarchy, std::size_t count, std::uint64_t seed, const DeformationOptions& opts,
              const fs::path& out, const std::vector<std::string>& args) {
  auto topo = make_topology(load_artifact(hierarchy));
  const auto data = synthesize_dataset(topo->edl, topo->graph(), count, opts, seed);
  fs::create_directories(out);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu.obj", i);
    save_pose(topo->template_mesh(), data[i], out / name);
  }
  write_run_manifest(out, "synth", args, "", hierarchy.string(), seed);
  std::cerr << "wrote " << data.size() << " meshes to " << out.string() << '\n';
  return kExitOk;
}

struct TrainOverrides {
  std::optional<std::string> variant, hierarchy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_steps;
};

int cmd_train(const fs::path& cfg_path, const fs::path& data_dir, const fs::path& out, const TrainOverrides& ov,
              const std::vector<std::string>& args) {
  if (!fs::exists(cfg_path)) throw UsageError("config not found: " + cfg_path.string());
  ModelConfig cfg = load_config(cfg_path);
  if (ov.variant) cfg.variant = parse_variant(*ov.variant);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.max_steps) cfg.max_steps = *ov.max_steps;
  fs::path hierarchy_dir;
  if (ov.hierarchy) {
    hierarchy_dir = *ov.hierarchy;
  } else if (!cfg.hierarchy.empty()) {
    hierarchy_dir = resolve(cfg_path.parent_path().empty() ? fs::path(".") : cfg_path.parent_path(), cfg.hierarchy);
  } else {
    throw UsageError("no hierarchy: set \"hierarchy\" in the config or pass --hierarchy");
  }
  cfg.validate();
  const auto files = obj_files(data_dir);

  auto topo = make_topology(load_artifact(hierarchy_dir));
  std::vector<std::vector<Vec3>> data;
  for (const auto& f : files) data.push_back(load_pose(f, topo->template_mesh()));
  std::cerr << "training " << to_string(cfg.variant) << " on " << data.size() << " meshes\n";

  // The run directory is self-contained: config, hierarchy copy, checkpoints, loss.
  fs::create_directories(out);
  const fs::path local_hierarchy = out / "hierarchy";
  if (fs::weakly_canonical(local_hierarchy) != fs::weakly_canonical(hierarchy_dir)) {
    fs::remove_all(local_hierarchy);
    save_artifact(topo->artifact, local_hierarchy);
  }
  cfg.hierarchy = "hierarchy";
  save_config(cfg, out / "config.json");
  write_run_manifest(out, "train", args, cfg_path.string(), data_dir.string(), cfg.seed);

  Autoencoder<float> model(topo, cfg);
  model.initialize(cfg.seed);
  TrainOptions opts;
  opts.output_dir = out;
  opts.on_step = [](const LossRecord& r) {
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " epoch " << r.epoch << " loss " << r.loss << '\n';
  };
  const auto history = train(model, data, opts);

  const double diag = compute_metrics(topo->template_mesh()).bbox_diagonal;
  const double err = mean_l1_error(model, data);
  std::printf("steps %zu\nfinal loss %.6g\nmean l1 error %.6g (%.6g x bbox diagonal)\n", history.size(),
              history.empty() ? 0.0 : history.back().loss, err, err / diag);
  return kExitOk;
}

int cmd_roundtrip(const fs::path& ckpt, const fs::path& mesh_path, const fs::path& out, std::optional<fs::path> report) {
  const LoadedModel lm = load_model(ckpt);
  const Mesh& tmpl = lm.model->topology().template_mesh();
  const auto input = load_pose(mesh_path, tmpl);
  auto recon = lm.model->autoencode(input);

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (!report) report = fs::path(out).replace_extension(".errors.csv");
  std::ofstream rep(*report);
  if (!rep) throw IoError("cannot write " + report->string());
  rep << "vertex,error\n";
  rep.precision(9);
  double sum = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double e = (recon[i] - input[i]).norm();
    sum += e;
    worst = std::max(worst, e);
    rep << i << ',' << e << '\n';
  }
  save_pose(tmpl, std::move(recon), out);
  const double mean = sum / static_cast<double>(input.size());
  std::printf("vertices %zu\nmean per-vertex error %.9g\nmax per-vertex error %.9g\n", input.size(), mean, worst);
  return kExitOk;
}

// Latent inputs come either from a CSV of codes or from meshes run through the encoder.
LatentSequence gather_codes(const LoadedModel& lm, const std::optional<fs::path>& codes,
                            const std::vector<std::string>& meshes) {
  if (codes && !meshes.empty()) throw UsageError("give either --codes or meshes, not both");
  LatentSequence seq;
  if (codes) {
    seq = read_latent_csv(*codes);
  } else {
    for (const auto& m : meshes) seq.push_back(lm.model->encode(load_pose(m, lm.model->topology().template_mesh())));
  }
  if (seq.empty()) throw UsageError("no latent codes given");
  for (const auto& c : seq) {
    if (c.size() != lm.config.latent_dim) {
      throw UsageError("latent dimension " + std::to_string(c.size()) + " does not match the model's " +
                       std::to_string(lm.config.latent_dim));
    }
  }
  return seq;
}

void decode_all(const LoadedModel& lm, const LatentSequence& seq, const fs::path& out, bool write_meshes) {
  fs::create_directories(out);
  write_latent_csv(seq, out / "latents.csv");
  if (!write_meshes) return;
  const Mesh& tmpl = lm.model->topology().template_mesh();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.obj", i);
    save_pose(tmpl, lm.model->reconstruct(seq[i]), out / name);
  }
  std::cerr << "wrote " << seq.size() << " codes to " << out.string() << '\n';
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, std::size_t seeds, bool corrupt) {
  const GradScope s = parse_grad_scope(scope);
  bool ok = true;
  for (std::size_t k = 0; k < seeds; ++k) {
    const GradcheckReport r = run_gradcheck(s, seed + k, corrupt);
    std::printf("%s seed %llu: %s max rel error %.3e (tolerance %.0e, %zu partials, worst %s)\n", to_string(s).c_str(),
                static_cast<unsigned long long>(r.seed), r.passed() ? "PASS" : "FAIL", r.max_rel_error, r.tolerance,
                r.checked, r.worst.c_str());
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Mesh autoencoder with an embedded deformation layer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // template
  std::string shape = "bar";
  std::size_t subdivisions = 2;
  std::string tmpl_out;
  auto* c_tmpl = app.add_subcommand("template", "Write a procedural template mesh");
  c_tmpl->add_option("--shape", shape, "bar | icosphere | uvsphere")->capture_default_str();
  c_tmpl->add_option("--subdivisions", subdivisions, "icosphere subdivisions")->capture_default_str();
  c_tmpl->add_option("--out", tmpl_out, "output OBJ")->required();

  // build-hierarchy
  std::string bh_mesh, bh_levels, bh_out;
  std::size_t bh_graph = 0, bh_spiral = 0;
  auto* c_bh = app.add_subcommand("build-hierarchy", "Build the mesh hierarchy and deformation graph");
  c_bh->add_option("mesh", bh_mesh, "template OBJ")->required();
  c_bh->add_option("--graph-nodes", bh_graph, "deformation graph size (must equal level 1 or 2)")->required();
  c_bh->add_option("--levels", bh_levels, "comma separated vertex counts, finest first")->required();
  c_bh->add_option("--spiral-length", bh_spiral, "spiral length for every level (0: per-level default)");
  c_bh->add_option("--out", bh_out, "artifact directory")->required();

  // synth
  std::string sy_hier, sy_out;
  std::size_t sy_count = 10;
  std::uint64_t sy_seed = 7;
  DeformationOptions sy_opts;
  auto* c_sy = app.add_subcommand("synth", "Write random bend/twist deformations of a hierarchy's template");
  c_sy->add_option("--hierarchy", sy_hier, "artifact directory")->required();
  c_sy->add_option("--count", sy_count)->capture_default_str();
  c_sy->add_option("--seed", sy_seed)->capture_default_str();
  c_sy->add_option("--max-bend", sy_opts.max_bend)->capture_default_str();
  c_sy->add_option("--max-twist", sy_opts.max_twist)->capture_default_str();
  c_sy->add_option("--noise-angle", sy_opts.noise_angle)->capture_default_str();
  c_sy->add_option("--noise-translation", sy_opts.noise_translation)->capture_default_str();
  c_sy->add_flag("--rotations-from-positions", sy_opts.rotations_from_positions,
                 "fit node rotations to the moved nodes by local Procrustes");
  c_sy->add_option("--out", sy_out, "output directory")->required();

  // train
  std::string tr_cfg, tr_data, tr_out;
  TrainOverrides tr_ov;
  auto* c_tr = app.add_subcommand("train", "Train an autoencoder on a directory of meshes");
  c_tr->add_option("--config", tr_cfg, "model config JSON")->required();
  c_tr->add_option("--data", tr_data, "directory of OBJ meshes sharing the template connectivity")->required();
  c_tr->add_option("--out", tr_out, "run directory")->required();
  c_tr->add_option("--variant", tr_ov.variant, "EDL | GL | LP (overrides the config)");
  c_tr->add_option("--hierarchy", tr_ov.hierarchy, "artifact directory (overrides the config)");
  c_tr->add_option("--seed", tr_ov.seed, "overrides the config seed");
  c_tr->add_option("--max-steps", tr_ov.max_steps, "overrides the config step budget");

  // roundtrip
  std::string rt_ckpt, rt_mesh, rt_out;
  std::optional<std::string> rt_report;
  auto* c_rt = app.add_subcommand("roundtrip", "Encode and decode one mesh, report per-vertex errors");
  c_rt->add_option("--ckpt", rt_ckpt, "checkpoint (config.json must sit next to it)")->required();
  c_rt->add_option("mesh", rt_mesh, "input OBJ")->required();
  c_rt->add_option("--out", rt_out, "reconstructed OBJ")->required();
  c_rt->add_option("--report", rt_report, "per-vertex error CSV (default: <out>.errors.csv)");

  // latent
  auto* c_lat = app.add_subcommand("latent", "Latent-space operations");
  c_lat->require_subcommand(1);
  std::string la_ckpt, la_out;
  std::optional<std::string> la_codes;
  std::vector<std::string> la_meshes;
  bool la_no_meshes = false;
  auto common = [&](CLI::App* c) {
    c->add_option("--ckpt", la_ckpt, "checkpoint (config.json must sit next to it)")->required();
    c->add_option("--out", la_out, "output directory")->required();
    c->add_flag("--codes-only", la_no_meshes, "write latents.csv without decoding meshes");
  };
  auto* l_enc = c_lat->add_subcommand("encode", "Encode meshes to latents.csv");
  common(l_enc);
  l_enc->add_option("meshes", la_meshes, "input OBJs")->required();
  auto* l_dec = c_lat->add_subcommand("decode", "Decode a latent CSV to meshes");
  common(l_dec);
  l_dec->add_option("--codes", la_codes, "latent CSV")->required();

  std::string li_source, li_target, li_alphas = "0,0.2,0.4,0.6,0.8,1";
  auto* l_int = c_lat->add_subcommand("interpolate", "Linear interpolation between two shapes");
  common(l_int);
  l_int->add_option("--source", li_source, "source OBJ")->required();
  l_int->add_option("--target", li_target, "target OBJ")->required();
  l_int->add_option("--alphas", li_alphas, "comma separated blend factors")->capture_default_str();

  std::string lt_target;
  auto* l_tr = c_lat->add_subcommand("transfer", "Move a sequence onto a new identity by a constant offset");
  common(l_tr);
  l_tr->add_option("--codes", la_codes, "source sequence as a latent CSV");
  l_tr->add_option("meshes", la_meshes, "source sequence OBJs, first frame in the shared pose");
  l_tr->add_option("--target-pose0", lt_target, "new identity in the first frame's pose (OBJ)")->required();

  double ls_alpha = 0.5;
  auto* l_sm = c_lat->add_subcommand("smooth", "Causal exponential smoothing of a sequence");
  common(l_sm);
  l_sm->add_option("--codes", la_codes, "sequence as a latent CSV");
  l_sm->add_option("meshes", la_meshes, "sequence OBJs");
  l_sm->add_option("--alpha", ls_alpha, "weight of the current frame, in [0, 1]")->capture_default_str();

  // gradcheck
  std::string gc_scope = "edl";
  std::uint64_t gc_seed = 1;
  std::size_t gc_seeds = 1;
  bool gc_corrupt = false;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of analytic gradients");
  c_gc->add_option("--scope", gc_scope, "edl | spiral | spectral | fc | elu | loss | end2end")->capture_default_str();
  c_gc->add_option("--seed", gc_seed)->capture_default_str();
  c_gc->add_option("--seeds", gc_seeds, "number of consecutive seeds")->capture_default_str();
  c_gc->add_flag("--corrupt-backward", gc_corrupt)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_tmpl) return cmd_template(shape, subdivisions, tmpl_out);
    if (*c_bh) return cmd_build_hierarchy(bh_mesh, bh_graph, bh_levels, bh_spiral, bh_out);
    if (*c_sy) return cmd_synth(sy_hier, sy_count, sy_seed, sy_opts, sy_out, args);
    if (*c_tr) return cmd_train(tr_cfg, tr_data, tr_out, tr_ov, args);
    if (*c_rt) return cmd_roundtrip(rt_ckpt, rt_mesh, rt_out, rt_report ? std::optional<fs::path>(*rt_report) : std::nullopt);
    if (*c_gc) return cmd_gradcheck(gc_scope, gc_seed, gc_seeds, gc_corrupt);
    if (*c_lat) {
      const LoadedModel lm = load_model(la_ckpt);
      LatentSequence seq;
      if (*l_enc || *l_dec) {
        seq = gather_codes(lm, la_codes, la_meshes);
      } else if (*l_int) {
        const auto ends = gather_codes(lm, std::nullopt, {li_source, li_target});
        for (double a : parse_list(li_alphas)) seq.push_back(interpolate(ends[0], ends[1], a));
      } else if (*l_tr) {
        const auto source = gather_codes(lm, la_codes, la_meshes);
        const auto target = gather_codes(lm, std::nullopt, {lt_target});
        seq = transfer(source, target[0]);
      } else if (*l_sm) {
        seq = smooth(gather_codes(lm, la_codes, la_meshes), ls_alpha);
      }
      decode_all(lm, seq, la_out, !la_no_meshes && !*l_enc);
      write_run_manifest(la_out, "latent", args, (fs::path(la_ckpt).parent_path() / "config.json").string(), "",
                         lm.config.seed);
      return kExitOk;
    }
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerificationFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace demea::cli
