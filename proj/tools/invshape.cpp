// Command-line front end: dataset generation and ingestion, surrogate and
// transformer training, shape optimization, the experiment suite,
// evaluation and rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invshape/cli/image.hpp"
#include "invshape/data/container.hpp"
#include "invshape/data/scatter.hpp"
#include "invshape/data/synthetic.hpp"
#include "invshape/pipeline/suite.hpp"

namespace fs = std::filesystem;
using namespace invshape;

namespace {

// ---------------------------------------------------------------------------
// Helpers

void require_file(const std::string& path, const char* what) {
  if (path.empty()) fail<ConfigError>("missing ", what, " path");
  if (!fs::is_regular_file(path)) fail<ConfigError>(what, " '", path, "' does not exist or is not a file");
}

void require_output(const std::string& path, const char* what) {
  if (path.empty()) fail<ConfigError>("missing ", what, " path");
  const fs::path parent = fs::absolute(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    fail<ConfigError>(what, " '", path, "': directory '", parent.string(), "' does not exist");
}

void require_output_dir(const std::string& path, const char* what) {
  if (path.empty()) fail<ConfigError>("missing ", what, " path");
  if (fs::exists(path) && !fs::is_directory(path))
    fail<ConfigError>(what, " '", path, "' exists and is not a directory");
  fs::create_directories(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Geometry from a PGM file or from `container.ffd:index`.
GeometryMap load_geometry(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon + 1 < spec.size() &&
      spec.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
    const std::string path = spec.substr(0, colon);
    require_file(path, "dataset");
    const Dataset d = read_container(path);
    const std::size_t idx = std::stoul(spec.substr(colon + 1));
    if (idx >= d.size()) fail<ConfigError>("geometry '", spec, "': index ", idx, " out of range (", d.size(), " samples)");
    return d.samples[idx].geometry;
  }
  require_file(spec, "geometry");
  return binarize_geometry(read_pgm(spec));
}

struct PhysicsOptions {
  double rho = 1.0, pixel_edge = 0.0, beta = 50.0;
  std::size_t inlet = 0;
  long outlet = -1;
  bool standard = false;

  void add(CLI::App* app) {
    app->add_option("--rho", rho, "Fluid density")->capture_default_str();
    app->add_option("--pixel-edge", pixel_edge, "Pixel edge length (0 = 1/H)")->capture_default_str();
    app->add_option("--beta", beta, "Smooth-extrema temperature")->capture_default_str();
    app->add_option("--inlet-column", inlet, "Inlet column")->capture_default_str();
    app->add_option("--outlet-column", outlet, "Outlet column (-1 = W-1)")->capture_default_str();
    app->add_flag("--standard-dynamic-pressure", standard, "Use rho/2 (u^2+v^2) in the total pressure");
  }
  PhysicsConfig config() const {
    PhysicsConfig c;
    c.rho = rho;
    c.pixel_edge = pixel_edge;
    c.beta = beta;
    c.inlet_column = inlet;
    if (outlet >= 0) c.outlet_column = static_cast<std::size_t>(outlet);
    c.standard_dynamic_pressure = standard;
    return c;
  }
};

struct TransformOptions {
  TransformConfig cfg;
  PhysicsOptions physics;

  void add(CLI::App* app) {
    app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--iterations", cfg.iterations, "Iteration budget")->capture_default_str();
    app->add_option("--plateau-window", cfg.plateau_window, "Plateau window (0 disables)")->capture_default_str();
    app->add_option("--plateau-tolerance", cfg.plateau_tolerance, "Relative plateau tolerance")->capture_default_str();
    app->add_option("--snapshot-every", cfg.snapshot_every, "Snapshot interval (0 = none)")->capture_default_str();
    physics.add(app);
  }
  TransformConfig config() const {
    TransformConfig c = cfg;
    c.physics = physics.config();
    return c;
  }
};

struct FlowOptions {
  FlowParams flow;
  void add(CLI::App* app) {
    app->add_option("--mean-velocity", flow.mean_velocity, "Mean inflow velocity")->capture_default_str();
    app->add_option("--outlet-pressure", flow.outlet_pressure, "Outlet static pressure")->capture_default_str();
    app->add_option("--pressure-drop", flow.pressure_drop, "Linear pressure drop")->capture_default_str();
    app->add_option("--bump-amplitude", flow.bump_amplitude, "Stagnation bump amplitude")->capture_default_str();
    app->add_option("--bump-sigma", flow.bump_sigma, "Stagnation bump width in pixels")->capture_default_str();
  }
};

RenderOptions render_options(std::optional<double> lo, std::optional<double> hi, std::size_t gap) {
  RenderOptions o;
  o.min = lo;
  o.max = hi;
  o.gap = gap;
  if (lo && hi && !(*lo < *hi)) fail<ConfigError>("render: invalid bounds min ", *lo, " >= max ", *hi);
  return o;
}

Dataset finish_dataset(Dataset d, double train_fraction, std::uint64_t seed) {
  d = quantize_to_f32(normalize(split(quantize_to_f32(std::move(d)), train_fraction, seed)));
  return d;
}

void print_quantities(std::ostream& os, const RunRecord& rec) {
  for (const TargetComparison& c : rec.comparisons)
    os << "  " << c.name << ": achieved " << fmt(c.achieved) << " target " << fmt(c.target)
       << (c.absolute ? " abs_error " : " rel_error ") << fmt(c.error) << "\n";
}

/// Resolved optimization targets from a targets file.
PhysicalTargets resolve_targets(const std::string& path, const UNet& unet, const Normalization& norm,
                                const PhysicsConfig& physics, const FlowParams& flow) {
  require_file(path, "targets file");
  std::ifstream in(path);
  TargetsFile tf = parse_targets(in, path);
  if (!tf.reference_geometry) return tf.targets;
  fs::path ref = *tf.reference_geometry;
  if (ref.is_relative()) ref = fs::path(path).parent_path() / ref;
  const GeometryMap g = load_geometry(ref.string());
  const GridField f = reference_field(g, unet, norm, parse_target_source(tf.reference_source), flow);
  return merge_targets(tf.targets, targets_from_reference(f, g, physics, tf.targets.mode));
}

Surrogate load_frozen_surrogate(const std::string& path) {
  require_file(path, "U-Net checkpoint");
  Surrogate s = load_surrogate(path);
  if (s.normalization.empty())
    fail<FormatError>(path, ": checkpoint carries no output normalization");
  s.net.freeze();
  return s;
}

// ---------------------------------------------------------------------------
// --config: key=value lines expanded to --key=value arguments

std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  std::vector<std::string> out;
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) fail<ConfigError>("--config needs a file path");
      path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (!path) return args;
  if (rest.empty()) fail<ConfigError>("--config given without a subcommand");
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(rest[0]);
  } catch (const CLI::OptionNotFound&) {
    fail<ConfigError>("unknown subcommand '", rest[0], "'");
  }
  require_file(*path, "config file");
  std::ifstream in(*path);
  std::string line;
  std::size_t lineno = 0;
  out.push_back(rest[0]);
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    line = line.substr(a, line.find_last_not_of(" \t\r") - a + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail<FormatError>(*path, ":", lineno, ": expected key=value");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string written = key;
    val.erase(0, std::min(val.size(), val.find_first_not_of(" \t")));
    for (char& c : key)
      if (c == '_') c = '-';
    if (key.empty()) fail<FormatError>(*path, ":", lineno, ": empty key");
    if (seen.count(key)) fail<FormatError>(*path, ":", lineno, ": duplicate key '", key, "'");
    seen[key] = lineno;
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt || key == "help")
      fail<ConfigError>(*path, ":", lineno, ": unknown key '", written, "' for ", rest[0]);
    if (opt->get_type_size() == 0) {
      if (val == "true" || val == "1") out.push_back("--" + key);
      else if (val != "false" && val != "0")
        fail<FormatError>(*path, ":", lineno, ": flag '", key, "' needs true or false");
    } else {
      out.push_back("--" + key + "=" + val);
    }
  }
  // Command-line values come last and therefore win.
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(std::uint64_t seed, std::size_t n, std::size_t h, std::size_t w,
                 const std::string& out, double fraction, std::optional<std::uint64_t> split_seed,
                 const std::string& families, std::size_t max_objects, const FlowParams& flow) {
  require_output(out, "output");
  SyntheticConfig sc;
  sc.height = h;
  sc.width = w;
  sc.max_objects = max_objects;
  sc.flow = flow;
  sc.families.clear();
  for (const std::string& f : split_list(families)) sc.families.push_back(parse_shape_kind(f));
  const Dataset d = finish_dataset(generate_synthetic(seed, n, sc), fraction, split_seed.value_or(seed));
  write_container(out, d);
  std::cout << "wrote " << out << ": " << d.size() << " samples " << h << "x" << w
            << " (train " << d.train.size() << ", eval " << d.eval.size() << ")\n";
  return 0;
}

int cmd_ingest(const std::vector<std::string>& scatters, const std::vector<std::string>& masks,
               std::size_t h, std::size_t w, const std::string& out, double fraction,
               std::uint64_t seed) {
  for (const std::string& s : scatters) require_file(s, "scatter file");
  for (const std::string& m : masks) require_file(m, "solid mask");
  if (!masks.empty() && masks.size() != scatters.size())
    fail<ConfigError>("ingest: ", masks.size(), " solid masks for ", scatters.size(), " scatter files");
  require_output(out, "output");
  Dataset d;
  for (std::size_t k = 0; k < scatters.size(); ++k) {
    std::ifstream in(scatters[k]);
    const ScatterSet s = parse_scatter(in, scatters[k]);
    std::optional<GeometryMap> mask;
    if (!masks.empty()) mask = binarize_geometry(read_pgm(masks[k]));
    IngestedSample smp = interpolate_scatter(s, h, w, mask);
    d.samples.push_back({std::move(smp.geometry), std::move(smp.field)});
  }
  d = finish_dataset(std::move(d), fraction, seed);
  write_container(out, d);
  std::cout << "wrote " << out << ": " << d.size() << " samples " << h << "x" << w << "\n";
  return 0;
}

int cmd_train_unet(const std::string& data_path, const std::string& out, TrainConfig tc,
                   std::size_t base, std::size_t depth, bool resume, const std::string& history) {
  require_file(data_path, "dataset");
  require_output(out, "output");
  if (!history.empty()) require_output(history, "history");
  if (resume && tc.checkpoint_dir.empty()) fail<ConfigError>("--resume needs --checkpoint-dir");
  const Dataset d = read_container(data_path);
  if (d.train.empty()) fail<ConfigError>(data_path, ": dataset has no train/eval split");
  UNetConfig uc;
  uc.base_channels = base;
  uc.depth = depth;
  uc.out_channels = d.channels();
  UNet net(uc, tc.seed);
  UNetTrainer trainer(net, d, tc);
  if (resume) trainer.resume(tc.checkpoint_dir);
  std::string log = "epoch\ttrain_loss\teval_loss\n";
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  while (trainer.epochs_done() < tc.epochs) {
    const EpochStats st = trainer.run_epoch();
    std::cout << "epoch " << st.epoch << " train_loss " << fmt(st.train_loss) << " eval_loss "
              << fmt(st.eval_loss) << std::endl;
    log += std::to_string(st.epoch) + "\t" + fmt(st.train_loss) + "\t" + fmt(st.eval_loss) + "\n";
    if (tc.patience > 0 && std::isfinite(st.eval_loss)) {
      if (st.eval_loss < best) {
        best = st.eval_loss;
        since_best = 0;
      } else if (++since_best >= tc.patience) {
        std::cout << "early stop: no eval improvement for " << tc.patience << " epochs\n";
        break;
      }
    }
  }
  save_unet(out, net, &d.normalization);
  if (!history.empty()) write_text(history, log);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(checkpoint_hash(net)));
  std::cout << "wrote " << out << " (" << net.params().scalar_count() << " parameters, hash " << hash << ")\n";
  return 0;
}

int cmd_pretrain(const std::string& data_path, const std::vector<std::string>& geometries,
                 const std::string& out, PretrainConfig pc, std::size_t held_out,
                 std::size_t control_step, std::uint64_t init_seed) {
  if (data_path.empty() == geometries.empty())
    fail<ConfigError>("pretrain-stn: give exactly one of --data or --geometry");
  require_output(out, "output");
  std::vector<GeometryMap> train, eval;
  if (!data_path.empty()) {
    require_file(data_path, "dataset");
    const Dataset d = read_container(data_path);
    if (d.train.empty())
      for (const Sample& s : d.samples) train.push_back(s.geometry);
    for (std::size_t s : d.train) train.push_back(d.samples[s].geometry);
    for (std::size_t k = 0; k < d.eval.size() && k < held_out; ++k) eval.push_back(d.samples[d.eval[k]].geometry);
  } else {
    for (const std::string& g : geometries) train.push_back(load_geometry(g));
  }
  if (train.empty()) fail<ConfigError>("pretrain-stn: no geometries");
  LocNetConfig lc;
  lc.height = train[0].height();
  lc.width = train[0].width();
  lc.control_step = control_step;
  LocNet net(lc, init_seed);
  const PretrainReport rep = pretrain_identity(net, train, eval, pc);
  save_locnet(out, net);
  std::cout << "initial_error " << fmt(rep.checks.front().second) << "\n"
            << "train_error " << fmt(rep.train_error) << "\n"
            << "eval_error " << fmt(rep.eval_error) << "\n"
            << "iterations " << rep.iterations << "\n"
            << "converged " << (rep.converged ? "yes" : "no") << "\n"
            << "wrote " << out << "\n";
  return rep.converged ? 0 : 4;
}

int cmd_optimize(const std::string& unet_path, const std::string& loc_path, const std::string& init,
                 const std::string& targets_path, const std::string& out,
                 const TransformOptions& topt, const FlowOptions& fopt, bool validate,
                 const RenderOptions& ro) {
  require_file(unet_path, "U-Net checkpoint");
  require_file(loc_path, "localization checkpoint");
  require_file(targets_path, "targets file");
  require_output_dir(out, "output directory");
  const Surrogate s = load_frozen_surrogate(unet_path);
  const GeometryMap g0 = load_geometry(init);
  LocNet loc = load_locnet(loc_path, g0.height(), g0.width());
  const TransformConfig tc = topt.config();
  const PhysicalTargets targets = resolve_targets(targets_path, s.net, s.normalization, tc.physics, fopt.flow);
  RunRecord rec;
  try {
    rec = run_transformation(g0, s.net, s.normalization, loc, targets, tc);
  } catch (const RunAborted& e) {
    write_run_record(out, e.record, ro);
    throw;
  }
  write_run_record(out, rec, ro);
  save_locnet(fs::path(out) / "loc_final.ckpt", loc);
  if (validate) {
    const ValidationReport v = validate_against_oracle(
        rec.final_geometry, analytic_field(rec.final_geometry, fopt.flow),
        predict(s.net, rec.final_geometry, s.normalization), targets, tc.physics);
    std::string t = "quantity\toracle\tsurrogate\ttarget\n";
    for (const QuantityDelta& q : v.quantities)
      t += q.name + "\t" + fmt(q.oracle) + "\t" + fmt(q.surrogate) + "\t" + fmt(q.target) + "\n";
    t += "mre_u\t" + fmt(v.mre[0]) + "\nmre_v\t" + fmt(v.mre[1]) + "\nmre_p\t" + fmt(v.mre[2]) + "\n";
    write_text(fs::path(out) / "validation.tsv", t);
  }
  std::cout << "loss " << fmt(rec.initial_loss) << " -> " << fmt(rec.final_loss) << " after "
            << rec.updates << " updates (" << rec.stop_reason << ")\n";
  print_quantities(std::cout, rec);
  std::cout << "wrote " << out << "\n";
  return 0;
}

std::vector<ExperimentPair> read_pairs(const std::string& path) {
  require_file(path, "pairs file");
  std::ifstream in(path);
  std::vector<ExperimentPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.find(':') != std::string::npos || fs::path(p).is_absolute()) return p;
    return (base / p).string();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string name, a, b, extra;
    if (!(ls >> name)) continue;
    if (!(ls >> a >> b) || (ls >> extra))
      fail<FormatError>(path, ":", lineno, ": expected 'name initial target'");
    pairs.push_back({name, load_geometry(resolve(a)), load_geometry(resolve(b))});
  }
  if (pairs.empty()) fail<FormatError>(path, ": no pairs");
  return pairs;
}

int cmd_suite(const std::string& unet_path, const std::string& loc_path, const std::string& pairs_path,
              const std::string& modes, const std::string& out, const TransformOptions& topt,
              const LossWeights& weights, const std::string& source, const FlowOptions& fopt,
              const RenderOptions& ro) {
  require_file(unet_path, "U-Net checkpoint");
  require_file(loc_path, "localization checkpoint");
  require_output_dir(out, "output directory");
  const Surrogate s = load_frozen_surrogate(unet_path);
  const std::vector<ExperimentPair> pairs = read_pairs(pairs_path);
  std::vector<LossMode> ms;
  for (const std::string& m : split_list(modes)) ms.push_back(parse_loss_mode(m));
  const LocNet loc = load_locnet(loc_path, pairs[0].initial.height(), pairs[0].initial.width());
  SuiteConfig sc;
  sc.transform = topt.config();
  sc.weights = weights;
  sc.target_source = parse_target_source(source);
  sc.flow = fopt.flow;
  const SuiteResult res = run_experiment_suite(pairs, ms, s.net, s.normalization, loc, sc);
  write_suite(out, res, pairs, s.net, s.normalization, ro);
  std::size_t failed = 0;
  for (const SuiteCell& c : res.cells) {
    std::cout << res.pair_names[c.pair] << "\t" << to_string(c.mode) << "\t"
              << (c.ok ? "ok\t" + fmt(c.metric) : "failed\t" + c.error) << "\n";
    failed += !c.ok;
  }
  std::cout << res.cells.size() << " cells, " << failed << " failed; wrote " << out << "\n";
  return failed ? 5 : 0;
}

int cmd_evaluate(const std::string& unet_path, const std::string& data_path, const std::string& out,
                 const PhysicsOptions& popt) {
  require_file(data_path, "dataset");
  require_output_dir(out, "output directory");
  const Surrogate s = load_frozen_surrogate(unet_path);
  Dataset d = read_container(data_path);
  d.normalization = s.normalization;
  if (d.eval.empty()) fail<ConfigError>(data_path, ": dataset has no eval split");
  const SurrogateEvaluation ev = evaluate_surrogate(s.net, d, popt.config());
  std::string m = "samples=" + std::to_string(ev.mre.samples) + "\nmre_u=" + fmt(ev.mre.mre[0]) +
                  "\nmre_v=" + fmt(ev.mre.mre[1]) + "\nmre_p=" + fmt(ev.mre.mre[2]) + "\n";
  double dq_max = 0.0, dp_max = 0.0;
  for (double v : ev.dq_profile) dq_max = std::max(dq_max, v);
  for (double v : ev.dp_profile) dp_max = std::max(dp_max, v);
  m += "dq_error_max=" + fmt(dq_max) + "\ndp_error_max=" + fmt(dp_max) + "\n";
  write_text(fs::path(out) / "mre.txt", m);
  std::string p = "column\tmre_u\tmre_v\tmre_p\tdq_error\tdp_error\n";
  for (std::size_t j = 0; j < ev.dq_profile.size(); ++j)
    p += std::to_string(j) + "\t" + fmt(ev.mre.column_mre[0][j]) + "\t" + fmt(ev.mre.column_mre[1][j]) +
         "\t" + fmt(ev.mre.column_mre[2][j]) + "\t" + fmt(ev.dq_profile[j]) + "\t" + fmt(ev.dp_profile[j]) + "\n";
  write_text(fs::path(out) / "profiles.tsv", p);
  std::cout << m << "wrote " << out << "\n";
  return 0;
}

int cmd_render(const std::string& data_path, std::optional<std::size_t> index,
               const std::string& geometry, const std::string& unet_path, const std::string& channel,
               const std::string& out, const RenderOptions& ro) {
  if (data_path.empty() == geometry.empty())
    fail<ConfigError>("render: give exactly one of --data or --geometry");
  require_output(out, "output");
  std::optional<GeometryMap> g;
  std::optional<GridField> f;
  if (!data_path.empty()) {
    require_file(data_path, "dataset");
    const Dataset d = read_container(data_path);
    const std::size_t k = index.value_or(0);
    if (k >= d.size()) fail<ConfigError>("render: index ", k, " out of range (", d.size(), " samples)");
    g = d.samples[k].geometry;
    f = d.samples[k].field;
  } else {
    require_file(geometry, "geometry");
    g = read_pgm(geometry);
  }
  if (!unet_path.empty()) {
    const Surrogate s = load_frozen_surrogate(unet_path);
    f = predict(s.net, *g, s.normalization);
  }
  const GeometryMap mask = binarize_geometry(*g);
  Image img;
  if (channel == "geometry") img = render_geometry(*g);
  else if (!f) fail<ConfigError>("render: channel '", channel, "' needs a field (--data or --unet)");
  else if (channel == "all") img = render_panels(*f, &mask, ro);
  else if (channel == "u") img = render_channel(*f, GridField::kU, &mask, ro);
  else if (channel == "v") img = render_channel(*f, GridField::kV, &mask, ro);
  else if (channel == "p") img = render_channel(*f, GridField::kP, &mask, ro);
  else fail<ConfigError>("render: unknown channel '", channel, "' (u, v, p, all, geometry)");
  write_ppm(out, img);
  std::cout << "wrote " << out << " (" << img.width << "x" << img.height << ")\n";
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"Differentiable inverse shape design for channel flow", "invshape"};
  // -h stays free for gen-data's grid height; subcommands inherit this flag.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::function<int()> action;
  std::string config_help;
  app.add_option("--config", config_help, "key=value file with option defaults (keys are long option names)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset container");
  std::uint64_t g_seed = 0;
  std::size_t g_n = 0, g_h = 32, g_w = 128, g_max = 3;
  std::string g_out, g_fam = "rectangle,triangle,circle,airfoil";
  double g_frac = 0.8;
  std::optional<std::uint64_t> g_split;
  FlowOptions g_flow;
  gen->add_option("--seed", g_seed, "Generator seed")->capture_default_str();
  gen->add_option("--n", g_n, "Number of samples")->required();
  gen->add_option("--h", g_h, "Grid height")->capture_default_str();
  gen->add_option("--w", g_w, "Grid width")->capture_default_str();
  gen->add_option("--out", g_out, "Output container")->required();
  gen->add_option("--train-fraction", g_frac, "Training share of the split")->capture_default_str();
  gen->add_option("--split-seed", g_split, "Split seed (default: --seed)");
  gen->add_option("--families", g_fam, "Comma-separated shape families")->capture_default_str();
  gen->add_option("--max-objects", g_max, "Objects per sample (1..n)")->capture_default_str();
  g_flow.add(gen);
  gen->callback([&] { action = [&] { return cmd_gen_data(g_seed, g_n, g_h, g_w, g_out, g_frac, g_split, g_fam, g_max, g_flow.flow); }; });

  // ingest
  auto* ing = app.add_subcommand("ingest", "Interpolate scattered exports onto the grid");
  std::vector<std::string> i_scatter, i_masks;
  std::size_t i_h = 64, i_w = 256;
  std::string i_out;
  double i_frac = 0.8;
  std::uint64_t i_seed = 0;
  ing->add_option("--scatter", i_scatter, "Scatter files (POINTS/TRIANGLES/BOUNDS)")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ing->add_option("--solid-mask", i_masks, "Optional PGM solid masks, one per scatter file")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ing->add_option("--h", i_h, "Grid height")->capture_default_str();
  ing->add_option("--w", i_w, "Grid width")->capture_default_str();
  ing->add_option("--out", i_out, "Output container")->required();
  ing->add_option("--train-fraction", i_frac, "Training share of the split")->capture_default_str();
  ing->add_option("--seed", i_seed, "Split seed")->capture_default_str();
  ing->callback([&] { action = [&] { return cmd_ingest(i_scatter, i_masks, i_h, i_w, i_out, i_frac, i_seed); }; });

  // train-unet
  auto* tr = app.add_subcommand("train-unet", "Train the flow-field surrogate");
  std::string t_data, t_out, t_hist;
  TrainConfig t_cfg;
  std::size_t t_base = 32, t_depth = 5;
  bool t_resume = false;
  std::string t_ckdir;
  tr->add_option("--data", t_data, "Dataset container")->required();
  tr->add_option("--out", t_out, "Output checkpoint")->required();
  tr->add_option("--epochs", t_cfg.epochs, "Epochs")->capture_default_str();
  tr->add_option("--lr", t_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  tr->add_option("--batch", t_cfg.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--seed", t_cfg.seed, "Initialization and shuffle seed")->capture_default_str();
  tr->add_option("--patience", t_cfg.patience, "Early-stop patience in epochs (0 = off)")->capture_default_str();
  tr->add_option("--threads", t_cfg.threads, "Worker threads (0 = INVSHAPE_THREADS or all)")->capture_default_str();
  tr->add_option("--checkpoint-dir", t_ckdir, "Per-epoch checkpoint directory");
  tr->add_flag("--resume", t_resume, "Resume from --checkpoint-dir");
  tr->add_option("--base-channels", t_base, "Channels of the first stage")->capture_default_str();
  tr->add_option("--depth", t_depth, "Number of compression stages")->capture_default_str();
  tr->add_option("--history", t_hist, "Write the per-epoch losses as TSV");
  tr->callback([&] {
    action = [&] {
      t_cfg.checkpoint_dir = t_ckdir;
      return cmd_train_unet(t_data, t_out, t_cfg, t_base, t_depth, t_resume, t_hist);
    };
  });

  // pretrain-stn
  auto* pre = app.add_subcommand("pretrain-stn", "Identity-pretrain the localization network");
  std::string p_data, p_out;
  std::vector<std::string> p_geo;
  PretrainConfig p_cfg;
  std::size_t p_held = 20, p_step = 4;
  std::uint64_t p_init = 0;
  pre->add_option("--data", p_data, "Dataset container (train split geometries)");
  pre->add_option("--geometry", p_geo, "Geometry PGM files (alternative to --data)")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  pre->add_option("--out", p_out, "Output checkpoint")->required();
  pre->add_option("--lr", p_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  pre->add_option("--iterations", p_cfg.max_iterations, "Maximum iterations")->capture_default_str();
  pre->add_option("--batch", p_cfg.batch_size, "Batch size")->capture_default_str();
  pre->add_option("--seed", p_cfg.seed, "Batch order seed")->capture_default_str();
  pre->add_option("--init-seed", p_init, "Parameter initialization seed")->capture_default_str();
  pre->add_option("--threshold", p_cfg.threshold, "Target mean per-pixel SSE")->capture_default_str();
  pre->add_option("--stop-fraction", p_cfg.stop_fraction, "Stop once below threshold x fraction")->capture_default_str();
  pre->add_option("--held-out", p_held, "Eval geometries used for the held-out error")->capture_default_str();
  pre->add_option("--control-step", p_step, "Control-point lattice step in pixels")->capture_default_str();
  pre->add_option("--threads", p_cfg.threads, "Worker threads (0 = INVSHAPE_THREADS or all)")->capture_default_str();
  pre->callback([&] { action = [&] { return cmd_pretrain(p_data, p_geo, p_out, p_cfg, p_held, p_step, p_init); }; });

  // shared render bounds
  struct RenderFlags {
    std::optional<double> lo, hi;
    std::size_t gap = 4;
    void add(CLI::App* a) {
      a->add_option("--min", lo, "Lower color bound");
      a->add_option("--max", hi, "Upper color bound");
      a->add_option("--gap", gap, "Rows between stacked panels")->capture_default_str();
    }
  };

  // optimize
  auto* opt = app.add_subcommand("optimize", "Optimize a shape against physical targets");
  std::string o_unet, o_loc, o_init, o_targets, o_out;
  TransformOptions o_t;
  FlowOptions o_flow;
  bool o_validate = false;
  RenderFlags o_rf;
  opt->add_option("--unet", o_unet, "U-Net checkpoint")->required();
  opt->add_option("--loc", o_loc, "Pretrained localization checkpoint")->required();
  opt->add_option("--init", o_init, "Initial geometry (PGM or data.ffd:index)")->required();
  opt->add_option("--targets", o_targets, "Targets file")->required();
  opt->add_option("--out", o_out, "Run directory")->required();
  opt->add_flag("--validate-oracle", o_validate, "Compare the result against the analytic flow");
  o_t.add(opt);
  o_flow.add(opt);
  o_rf.add(opt);
  opt->callback([&] {
    action = [&] {
      return cmd_optimize(o_unet, o_loc, o_init, o_targets, o_out, o_t, o_flow, o_validate,
                          render_options(o_rf.lo, o_rf.hi, o_rf.gap));
    };
  });

  // suite
  auto* su = app.add_subcommand("suite", "Run every (pair, mode) optimization cell");
  std::string s_unet, s_loc, s_pairs, s_out, s_modes = "constraints,constraints+geometry,field_sse",
                                              s_source = "surrogate";
  TransformOptions s_t;
  LossWeights s_w;
  FlowOptions s_flow;
  RenderFlags s_rf;
  su->add_option("--unet", s_unet, "U-Net checkpoint")->required();
  su->add_option("--loc", s_loc, "Pretrained localization checkpoint")->required();
  su->add_option("--pairs", s_pairs, "Pairs file: 'name initial target' per line")->required();
  su->add_option("--modes", s_modes, "Comma-separated loss modes")->capture_default_str();
  su->add_option("--out", s_out, "Suite directory")->required();
  su->add_option("--target-source", s_source, "surrogate or oracle")->capture_default_str();
  su->add_option("--weight-dp", s_w.dp, "Weight of the pressure term")->capture_default_str();
  su->add_option("--weight-f", s_w.force, "Weight of each force term")->capture_default_str();
  su->add_option("--weight-length", s_w.length, "Weight of the length term")->capture_default_str();
  su->add_option("--weight-height", s_w.height, "Weight of the height term")->capture_default_str();
  su->add_option("--weight-com", s_w.com, "Weight of each centroid term")->capture_default_str();
  su->add_option("--weight-field", s_w.field, "Weight of the field term")->capture_default_str();
  s_t.add(su);
  s_flow.add(su);
  s_rf.add(su);
  su->callback([&] {
    action = [&] {
      return cmd_suite(s_unet, s_loc, s_pairs, s_modes, s_out, s_t, s_w, s_source, s_flow,
                       render_options(s_rf.lo, s_rf.hi, s_rf.gap));
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Surrogate MRE and continuity profiles on the eval split");
  std::string e_unet, e_data, e_out;
  PhysicsOptions e_phys;
  ev->add_option("--unet", e_unet, "U-Net checkpoint")->required();
  ev->add_option("--data", e_data, "Dataset container")->required();
  ev->add_option("--out", e_out, "Output directory")->required();
  e_phys.add(ev);
  ev->callback([&] { action = [&] { return cmd_evaluate(e_unet, e_data, e_out, e_phys); }; });

  // render
  auto* rd = app.add_subcommand("render", "Render a field or geometry to PPM");
  std::string r_data, r_geo, r_unet, r_channel = "all", r_out;
  std::optional<std::size_t> r_index;
  RenderFlags r_rf;
  rd->add_option("--data", r_data, "Dataset container");
  rd->add_option("--index", r_index, "Sample index in --data");
  rd->add_option("--geometry", r_geo, "Geometry PGM");
  rd->add_option("--unet", r_unet, "Render the surrogate prediction instead of the stored field");
  rd->add_option("--channel", r_channel, "u, v, p, all or geometry")->capture_default_str();
  rd->add_option("--out", r_out, "Output PPM")->required();
  r_rf.add(rd);
  rd->callback([&] {
    action = [&] { return cmd_render(r_data, r_index, r_geo, r_unet, r_channel, r_out, render_options(r_rf.lo, r_rf.hi, r_rf.gap)); };
  });

  std::vector<std::string> args(argv + 1, argv + argc);
  args = expand_config(args, app);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }
  return action ? action() : 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << one_line(e.what()) << "\n";
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << one_line(e.what()) << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
  }
  return 1;
}
