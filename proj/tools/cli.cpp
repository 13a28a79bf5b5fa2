#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tsvan/bench.hpp"
#include "tsvan/checkpoint.hpp"
#include "tsvan/classifier.hpp"
#include "tsvan/error.hpp"
#include "tsvan/gradcheck.hpp"
#include "tsvan/metrics.hpp"
#include "tsvan/model.hpp"
#include "tsvan/synthdata.hpp"
#include "tsvan/train.hpp"

namespace tsvan {

namespace {

using nlohmann::json;

// Options every subcommand accepts.
struct Common {
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  sub->add_option("--config", c.config, "JSON file whose keys are long option names of this command");
  sub->add_option("--out", c.out, "Output path");
}

// Fills options that were not given on the command line from the JSON config.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config '" + path + "' must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (!opt) throw ValidationError("config key '" + key + "' is not an option of '" + sub->get_name() + "'");
    if (opt->count() > 0) continue;  // the command line wins
    std::vector<std::string> results;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) results.push_back(text(v));
    else
      results.push_back(text(value));
    try {
      opt->add_result(results);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("failed writing '" + path + "'");
}

// Writes `j` to `path` when given, and always prints it.
void emit_json(const json& j, const std::string& path, std::ostream& out) {
  if (!path.empty()) write_text(path, j.dump(2) + "\n");
  out << j.dump(2) << '\n';
}

bool given(const CLI::App* sub, const std::string& name) { return sub->count(name) > 0; }

// ---- gen-data ----------------------------------------------------------------

struct GenData {
  Common common;
  std::size_t classes = 4;
  std::vector<std::string> families;
  std::size_t clips_per_class = 50;
  ClipSpec spec;
};

int run_gen_data(const GenData& g, std::ostream& out) {
  if (g.common.out.empty()) throw ValidationError("gen-data: --out is required");
  std::vector<MotionFamily> classes;
  if (!g.families.empty()) {
    for (const auto& f : g.families) classes.push_back(family_from_name(f));
  } else {
    classes = default_classes(g.classes);
  }
  const DatasetManifest m = gen_dataset(classes, g.clips_per_class, g.common.seed, g.spec, g.common.out);
  out << "wrote " << m.clips.size() << " clips (" << m.train.size() << " train, " << m.test.size()
      << " test) to " << g.common.out << '\n';
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string preset = "desk";
  std::string log;
  bool classifier = false;
  // Bound to options; copied into the configs only when given.
  TrainConfig train;
  ModelConfig model;
  ClassifierConfig clf;
  ClassifierTrainConfig clf_train;
};

int run_train(CLI::App* sub, TrainArgs& a, std::ostream& out) {
  if (a.data.empty()) throw ValidationError("train: --data is required");
  if (a.common.out.empty()) throw ValidationError("train: --out is required");
  const Dataset data = load_dataset(a.data);
  std::unique_ptr<std::ofstream> log;
  if (!a.log.empty()) {
    log = std::make_unique<std::ofstream>(a.log);
    if (!*log) throw IoError("cannot open '" + a.log + "' for writing");
  }

  if (a.classifier) {
    ClassifierConfig cc = a.clf;
    cc.channels = data.spec.channels;
    cc.size = data.spec.size;
    cc.classes = data.manifest.classes.size();
    ClassifierTrainConfig tc = a.clf_train;
    tc.seed = a.common.seed;
    Classifier clf = Classifier::init(cc, split_seed(a.common.seed, 0xC1A5));
    const auto history = train_classifier(clf, data, tc);
    if (log)
      for (std::size_t i = 0; i < history.size(); ++i) *log << json{{"iteration", i}, {"loss", history[i]}}.dump() << '\n';
    save_classifier(clf, a.common.out);
    out << json{{"checkpoint", a.common.out},
                {"final_loss", history.back()},
                {"test_accuracy", classifier_accuracy(clf, data, data.manifest.test)}}
               .dump(2)
        << '\n';
    return 0;
  }

  TrainConfig tc;
  if (a.preset == "desk")
    tc = desk_train_config(data.spec);
  else if (a.preset != "default")
    throw ValidationError("train: unknown preset '" + a.preset + "' (expected desk or default)");
  const std::map<std::string, std::function<void()>> overrides = {
      {"--iterations", [&] { tc.iterations = a.train.iterations; }},
      {"--batch", [&] { tc.batch = a.train.batch; }},
      {"--lr", [&] { tc.adam.lr = a.train.adam.lr; }},
      {"--beta1", [&] { tc.adam.beta1 = a.train.adam.beta1; }},
      {"--beta2", [&] { tc.adam.beta2 = a.train.adam.beta2; }},
      {"--lambda1", [&] { tc.weights.l1 = a.train.weights.l1; }},
      {"--lambda2", [&] { tc.weights.l2 = a.train.weights.l2; }},
      {"--lambda3", [&] { tc.weights.l3 = a.train.weights.l3; }},
      {"--lambda4", [&] { tc.weights.l4 = a.train.weights.l4; }},
      {"--lambda5-start", [&] { tc.weights.l5_start = a.train.weights.l5_start; }},
      {"--lambda5-end", [&] { tc.weights.l5_end = a.train.weights.l5_end; }},
      {"--content-steps", [&] { tc.content_steps = a.train.content_steps; }},
      {"--motion-steps", [&] { tc.motion_steps = a.train.motion_steps; }},
      {"--scheduled-sampling", [&] { tc.scheduled_sampling = a.train.scheduled_sampling; }},
  };
  for (const auto& [name, apply] : overrides)
    if (given(sub, name)) apply();
  tc.seed = a.common.seed;

  ModelConfig mc = a.model;
  mc.channels = data.spec.channels;
  mc.size = data.spec.size;
  mc.classes = data.manifest.classes.size();
  Model<float> model = Model<float>::init(mc, a.common.seed);
  train_model(model, data, tc, [&](const LossBreakdown& lb) {
    if (log) *log << lb.to_json().dump() << '\n';
  });
  save_model(model, a.common.out);
  const PredictionReport r = evaluate_prediction(model, data, data.manifest.test);
  json summary = {{"checkpoint", a.common.out}, {"train", tc.to_json()}, {"test", r.to_json()}};
  out << summary.dump(2) << '\n';
  return 0;
}

// ---- rollout -----------------------------------------------------------------

struct RolloutArgs {
  Common common;
  std::string model;
  std::size_t label = 0;
  std::size_t count = 1;
  std::size_t frames = 10;
  std::size_t heatup = 2;
  bool masks_zero = false;
};

int run_rollout(const RolloutArgs& a, std::ostream& out) {
  if (a.model.empty()) throw ValidationError("rollout: --model is required");
  if (a.common.out.empty()) throw ValidationError("rollout: --out is required");
  const Model<float> m = load_model(a.model);
  std::vector<VideoClip> clips;
  for (std::size_t i = 0; i < a.count; ++i) {
    VideoClip c;
    c.seed = split_seed(a.common.seed, i);
    c.action = a.label;
    SeededRng rng(c.seed);
    c.frames = rollout(m, a.label, rng, a.frames, a.heatup, a.masks_zero);
    clips.push_back(std::move(c));
  }
  ClipSpec spec;
  spec.frames = a.frames;
  spec.size = m.config.size;
  spec.channels = m.config.channels;
  write_smv(a.common.out, clips, spec);
  out << "wrote " << clips.size() << " generated clips of class " << a.label << " to " << a.common.out << '\n';
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model;
  std::string classifier;
  std::string data;
  std::size_t rollouts = 0;  // generated clips per class
  std::size_t heatup = 2;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.model.empty() && a.classifier.empty()) throw ValidationError("eval: give --model, --classifier or both");
  json report = json::object();
  std::optional<Dataset> data;
  if (!a.data.empty()) data = load_dataset(a.data);
  std::optional<Model<float>> model;
  std::optional<Classifier> clf;
  if (!a.model.empty()) model = load_model(a.model);
  if (!a.classifier.empty()) clf = load_classifier(a.classifier);

  if (model && data) report["prediction"] = evaluate_prediction(*model, *data, data->manifest.test).to_json();
  if (clf && data) {
    std::vector<TensorF> clips;
    for (std::size_t id : data->manifest.test) clips.push_back(data->clips[id].frames);
    report["classifier"] = {{"test_accuracy", classifier_accuracy(*clf, *data, data->manifest.test)},
                            {"real", evaluate_with_classifier(clips, clf->as_clip_classifier(data->spec.frames)).to_json()}};
  }
  if (a.rollouts > 0) {
    if (!model || !clf) throw ValidationError("eval: --rollouts needs both --model and --classifier");
    const std::size_t frames = data ? data->spec.frames : 10;
    std::vector<TensorF> clips;
    for (std::size_t k = 0; k < model->config.classes; ++k)
      for (std::size_t i = 0; i < a.rollouts; ++i) {
        SeededRng rng(split_seed(a.common.seed, k * a.rollouts + i));
        clips.push_back(rollout(*model, k, rng, frames, a.heatup));
      }
    report["generated"] = evaluate_with_classifier(clips, clf->as_clip_classifier(frames)).to_json();
  }
  if (report.empty()) throw ValidationError("eval: nothing to evaluate (add --data or --rollouts)");
  emit_json(report, a.common.out, out);
  return 0;
}

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  Common common;
  std::string op;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.op.empty()) throw ValidationError("gradcheck: --op is required (or 'all')");
  std::vector<std::string> ops = a.op == "all" ? gradcheck_ops() : std::vector<std::string>{a.op};
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 5; ++s) seeds.push_back(a.common.seed + s);
  json rows = json::array();
  bool ok = true;
  for (const auto& op : ops) {
    const OpCheckReport r = gradcheck_op(op, seeds);
    char line[160];
    std::snprintf(line, sizeof line, "%-24s cases=%zu max_rel_err=%.3e %s", op.c_str(), r.cases, r.stats.max_rel_err,
                  r.passed ? "ok" : "FAILED");
    out << line << '\n';
    rows.push_back({{"op", op}, {"cases", r.cases}, {"max_rel_err", r.stats.max_rel_err}, {"passed", r.passed}});
    ok = ok && r.passed;
  }
  if (!a.common.out.empty()) write_text(a.common.out, rows.dump(2) + "\n");
  if (!ok) err << "gradcheck: relative error above tolerance\n";
  return ok ? 0 : 1;
}

// ---- bench -------------------------------------------------------------------

struct BenchArgs {
  Common common;
  std::vector<std::string> modes = {"dense", "separable"};
  std::vector<std::size_t> n = {5, 17};
  std::vector<std::size_t> scales = {1};
  std::size_t finest = 64;
  std::size_t channels = 8;
  std::size_t repetitions = 5;
  std::size_t warmup = 1;
  bool parallel = false;
  std::string csv;
};

int run_bench_cmd(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<BenchCase> cases;
  for (std::size_t n : a.n)
    for (std::size_t s : a.scales)
      for (const auto& mode : a.modes) {
        BenchCase c;
        if (mode == "dense")
          c.mode = KernelMode::dense;
        else if (mode == "separable")
          c.mode = KernelMode::separable;
        else
          throw ValidationError("bench: unknown mode '" + mode + "' (expected dense or separable)");
        c.n = n;
        c.scales = s;
        c.resolutions = pyramid_resolutions(s, a.finest);
        c.channels = a.channels;
        c.repetitions = a.repetitions;
        c.warmup = a.warmup;
        cases.push_back(c);
        if (a.parallel && c.mode == KernelMode::separable) {
          c.parallel = true;
          cases.push_back(c);
        }
      }
  const auto results = run_bench(cases, a.common.seed);
  std::ostringstream csv;
  write_bench_csv(csv, results);
  if (a.csv.empty())
    out << csv.str();
  else
    write_text(a.csv, csv.str());
  if (!a.common.out.empty()) {
    json rows = json::array();
    for (const auto& r : results) rows.push_back(r.to_json());
    write_text(a.common.out, rows.dump(2) + "\n");
  }
  bool ok = true;
  for (const auto& r : results)
    if (!r.correct) {
      err << "bench: case " << r.spec.name() << " failed its correctness check (residual " << r.residual << ")\n";
      ok = false;
    }
  return ok ? 0 : 1;
}

// ---- export-frames -------------------------------------------------------------

struct ExportArgs {
  Common common;
  std::string input;
  std::vector<std::size_t> clips;
};

int run_export(const ExportArgs& a, std::ostream& out) {
  if (a.input.empty()) throw ValidationError("export-frames: --input is required");
  if (a.common.out.empty()) throw ValidationError("export-frames: --out (output directory) is required");
  const SmvContents smv = read_smv(a.input);
  std::vector<std::size_t> ids = a.clips;
  if (ids.empty())
    for (std::size_t i = 0; i < smv.clips.size(); ++i) ids.push_back(i);
  std::error_code ec;
  std::filesystem::create_directories(a.common.out, ec);
  if (ec) throw IoError("cannot create '" + a.common.out + "': " + ec.message());
  std::size_t written = 0;
  for (std::size_t id : ids) {
    if (id >= smv.clips.size())
      throw ValidationError("export-frames: clip " + std::to_string(id) + " out of range (" +
                            std::to_string(smv.clips.size()) + " clips)");
    char name[32];
    std::snprintf(name, sizeof name, "clip%04zu", id);
    written += export_clip_frames(smv.clips[id].frames, (std::filesystem::path(a.common.out) / name).string()).size();
  }
  out << "wrote " << written << " frames to " << a.common.out << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stream video generation toolkit: data, training, evaluation and benchmarks", "tsvan"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic shape-motion dataset");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--classes", gen.classes, "Number of classes, taken from the default family order")
      ->capture_default_str();
  gen_cmd->add_option("--families", gen.families, "Explicit motion families, overriding --classes")->delimiter(',');
  gen_cmd->add_option("--clips-per-class", gen.clips_per_class)->capture_default_str();
  gen_cmd->add_option("--frames", gen.spec.frames)->capture_default_str();
  gen_cmd->add_option("--size", gen.spec.size)->capture_default_str();
  gen_cmd->add_option("--channels", gen.spec.channels)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the next-frame model, or the classifier with --classifier");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "SMV1 dataset");
  train_cmd->add_option("--preset", tr.preset, "desk (tuned for short runs) or default")->capture_default_str();
  train_cmd->add_option("--log", tr.log, "Write one JSON loss record per iteration");
  train_cmd->add_flag("--classifier", tr.classifier, "Train the evaluation classifier instead of the model");
  train_cmd->add_option("--iterations", tr.train.iterations);
  train_cmd->add_option("--batch", tr.train.batch);
  train_cmd->add_option("--lr", tr.train.adam.lr);
  train_cmd->add_option("--beta1", tr.train.adam.beta1);
  train_cmd->add_option("--beta2", tr.train.adam.beta2);
  train_cmd->add_option("--lambda1", tr.train.weights.l1);
  train_cmd->add_option("--lambda2", tr.train.weights.l2);
  train_cmd->add_option("--lambda3", tr.train.weights.l3);
  train_cmd->add_option("--lambda4", tr.train.weights.l4);
  train_cmd->add_option("--lambda5-start", tr.train.weights.l5_start);
  train_cmd->add_option("--lambda5-end", tr.train.weights.l5_end);
  train_cmd->add_option("--content-steps", tr.train.content_steps);
  train_cmd->add_option("--motion-steps", tr.train.motion_steps);
  train_cmd->add_option("--scheduled-sampling", tr.train.scheduled_sampling);
  train_cmd->add_option("--ngf", tr.model.ngf)->capture_default_str();
  train_cmd->add_option("--content-dim", tr.model.content_dim)->capture_default_str();
  train_cmd->add_option("--motion-dim", tr.model.motion_dim)->capture_default_str();
  train_cmd->add_option("--scales", tr.model.scales)->capture_default_str();
  train_cmd->add_option("--kernel", tr.model.kernel)->capture_default_str();
  train_cmd->add_option("--convlstm", tr.model.convlstm)->capture_default_str();
  train_cmd->add_option("--width", tr.clf.width, "Classifier base width")->capture_default_str();
  train_cmd->add_option("--classifier-iterations", tr.clf_train.iterations)->capture_default_str();
  train_cmd->add_option("--classifier-batch", tr.clf_train.batch)->capture_default_str();
  train_cmd->add_option("--classifier-lr", tr.clf_train.lr)->capture_default_str();

  RolloutArgs ro;
  auto* rollout_cmd = app.add_subcommand("rollout", "Generate clips from a trained model into an SMV1 file");
  add_common(rollout_cmd, ro.common);
  rollout_cmd->add_option("--model", ro.model, "Model checkpoint");
  rollout_cmd->add_option("--label", ro.label)->capture_default_str();
  rollout_cmd->add_option("--count", ro.count)->capture_default_str();
  rollout_cmd->add_option("--frames", ro.frames)->capture_default_str();
  rollout_cmd->add_option("--heatup", ro.heatup)->capture_default_str();
  rollout_cmd->add_flag("--masks-zero", ro.masks_zero, "Diagnostic: force every motion mask to 0");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Report prediction error, classifier accuracy and entropy metrics");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--model", ev.model, "Model checkpoint");
  eval_cmd->add_option("--classifier", ev.classifier, "Classifier checkpoint");
  eval_cmd->add_option("--data", ev.data, "SMV1 dataset (its test split is used)");
  eval_cmd->add_option("--rollouts", ev.rollouts, "Generated clips per class scored by the classifier")
      ->capture_default_str();
  eval_cmd->add_option("--heatup", ev.heatup)->capture_default_str();

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of one operation's backward pass");
  add_common(grad_cmd, gc.common);
  grad_cmd->add_option("--op", gc.op, "Operation name, or 'all'");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Time dense and separable fusion after a correctness check");
  add_common(bench_cmd, be.common);
  bench_cmd->add_option("--modes", be.modes)->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--n", be.n, "Kernel sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--scales", be.scales, "Fusion scale counts")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--finest", be.finest, "Finest resolution")->capture_default_str();
  bench_cmd->add_option("--channels", be.channels)->capture_default_str();
  bench_cmd->add_option("--repetitions", be.repetitions)->capture_default_str();
  bench_cmd->add_option("--warmup", be.warmup)->capture_default_str();
  bench_cmd->add_flag("--parallel", be.parallel, "Also time separable cases with one thread per scale");
  bench_cmd->add_option("--csv", be.csv, "CSV output path (default stdout)");

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export-frames", "Write clips of an SMV1 file as PGM/PPM images");
  add_common(export_cmd, ex.common);
  export_cmd->add_option("--input", ex.input, "SMV1 file");
  export_cmd->add_option("--clip", ex.clips, "Clip indices (default all)")->delimiter(',');

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("tsvan");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::map<CLI::App*, std::string> configs = {{gen_cmd, gen.common.config},   {train_cmd, tr.common.config},
                                                      {rollout_cmd, ro.common.config}, {eval_cmd, ev.common.config},
                                                      {grad_cmd, gc.common.config},    {bench_cmd, be.common.config},
                                                      {export_cmd, ex.common.config}};
    apply_config(sub, configs.at(sub));
    if (sub == gen_cmd) return run_gen_data(gen, out);
    if (sub == train_cmd) return run_train(sub, tr, out);
    if (sub == rollout_cmd) return run_rollout(ro, out);
    if (sub == eval_cmd) return run_eval(ev, out);
    if (sub == grad_cmd) return run_gradcheck(gc, out, err);
    if (sub == bench_cmd) return run_bench_cmd(be, out, err);
    return run_export(ex, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace tsvan
