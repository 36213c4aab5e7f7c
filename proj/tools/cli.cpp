#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "keco/coreset.hpp"
#include "keco/embedding_store.hpp"
#include "keco/engine.hpp"
#include "keco/error.hpp"
#include "keco/eval_harness.hpp"
#include "keco/init_strategies.hpp"
#include "keco/io_util.hpp"
#include "keco/parallel.hpp"
#include "keco/retrieval.hpp"

namespace keco::cli {

using nlohmann::json;

namespace {

void write_json(const std::string& path, const json& doc) { io::atomic_write(path, doc.dump(2) + "\n"); }

json resolved_config(const CLI::App& root) {
  // key=value lines as CLI11 would write them back to a config file, limited to
  // global options and the subcommand that ran.
  const auto subs = root.get_subcommands();
  const std::string prefix = subs.empty() ? std::string() : subs.front()->get_name() + ".";
  json out = json::object();
  std::istringstream in(root.config_to_str(true, false));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.starts_with('#') || line.starts_with('[')) continue;
    auto key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    auto value = line.substr(eq + 1);
    while (!value.empty() && value.front() == ' ') value.erase(0, 1);
    if (key.find('.') == std::string::npos) {
      out[key] = value;
    } else if (!prefix.empty() && key.starts_with(prefix)) {
      out[key.substr(prefix.size())] = value;
    }
  }
  return out;
}

/// Support pack minus the coreset's own records (S' = S - C).
EmbeddingPack untapped_of(const EmbeddingPack& pack, const Coreset& coreset) {
  std::unordered_set<std::string> ids;
  for (const auto& e : coreset.entries()) ids.insert(e.source_id);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pack.size(); ++i)
    if (!ids.contains(pack[i].id)) keep.push_back(i);
  return select_records(pack, keep);
}

struct InitOptions {
  std::string strategy = "random";
  std::size_t size = 0;
  std::uint64_t seed = 0;
  std::string scores;
  bool allow_uneven = false;
  std::string kcenter_metric = "euclidean";

  InitSpec resolve() const {
    InitSpec spec;
    spec.strategy = parse_init_strategy(strategy);
    spec.coreset_size = size;
    spec.seed = seed;
    spec.allow_uneven = allow_uneven;
    spec.kcenter_metric = parse_kcenter_metric(kcenter_metric);
    if (!scores.empty()) spec.scores_path = scores;
    if (spec.strategy == InitStrategy::InfoScore && !spec.scores_path)
      throw Error(ErrorCode::InvalidConfig, "strategy infoscore requires --scores");
    return spec;
  }
};

struct UpdateOptions {
  std::string select = "ds";
  double alpha = 0.2;
  std::size_t epochs = 10;
  std::size_t batch_size = 1000;
  std::uint64_t seed = 0;
  bool no_reshuffle = false;

  UpdateConfig resolve() const {
    UpdateConfig cfg;
    cfg.strategy = parse_select_strategy(select);
    cfg.alpha = alpha;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.reshuffle_each_epoch = !no_reshuffle;
    cfg.validate();
    return cfg;
  }
};

void add_init_options(CLI::App* app, InitOptions& o, const std::string& strategy_flag) {
  app->add_option(strategy_flag, o.strategy, "random | kcenter | infoscore")->capture_default_str();
  app->add_option("--scores", o.scores, "contribution matrix stem or JSONL of infoscores");
  app->add_flag("--allow-uneven", o.allow_uneven, "permit m not divisible by classes / short classes");
  app->add_option("--kcenter-metric", o.kcenter_metric, "euclidean | cosine_distance")->capture_default_str();
}

void add_update_options(CLI::App* app, UpdateOptions& o, bool with_select) {
  if (with_select) app->add_option("--select", o.select, "rs | ss | ds")->capture_default_str();
  app->add_option("--alpha", o.alpha, "update rate in [0, 1]")->capture_default_str();
  app->add_option("--epochs", o.epochs)->capture_default_str();
  app->add_option("--batch-size", o.batch_size)->capture_default_str();
  app->add_flag("--no-reshuffle", o.no_reshuffle, "keep pack order in every epoch");
}

struct ExperimentOptions {
  std::string support, test, name = "experiment";
  InitOptions init;
  UpdateOptions update;
  std::vector<std::size_t> shots = {2, 4};
  std::vector<std::string> baselines;
  std::optional<double> untapped_ratio;
  std::string similarity = "cosine";
  std::string out;

  ExperimentSpec resolve() const {
    ExperimentSpec spec;
    spec.name = name;
    spec.support = load_pack(support);
    spec.test = load_pack(test);
    spec.init = init.resolve();
    spec.update = update.resolve();
    spec.shots = shots;
    if (!baselines.empty()) {
      spec.conditions.clear();
      for (const auto& b : baselines) spec.conditions.push_back(parse_condition(b));
    }
    spec.untapped_ratio = untapped_ratio;
    spec.metric = parse_similarity_metric(similarity);
    return spec;
  }
};

void add_experiment_options(CLI::App* app, ExperimentOptions& o) {
  app->add_option("--support", o.support, "support pack")->required();
  app->add_option("--test", o.test, "test pack")->required();
  app->add_option("--name", o.name)->capture_default_str();
  app->add_option("--size", o.init.size, "coreset size m")->required();
  app->add_option("--seed", o.init.seed, "seed for initialization and updates")->capture_default_str();
  add_init_options(app, o.init, "--init-strategy");
  add_update_options(app, o.update, false);
  app->add_option("--shots", o.shots, "shot counts (repeatable)")->capture_default_str();
  app->add_option("--baseline", o.baselines, "fs-ic | fs-is | keco-rs | keco-ss | keco-ds (repeatable)");
  app->add_option("--untapped-ratio", o.untapped_ratio, "untapped samples per coreset entry, per class");
  app->add_option("--similarity", o.similarity, "cosine | dot")->capture_default_str();
  app->add_option("--out", o.out, "results JSON");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Key-based coreset construction, optimization and retrieval"};
  app.name("keco");
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override it");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: KECO_THREADS or 1)");

  // init ---------------------------------------------------------------------
  auto* init_cmd = app.add_subcommand("init", "build an initial coreset from a support pack");
  std::string init_pack, init_out, init_report;
  InitOptions init_opts;
  init_cmd->add_option("--pack", init_pack, "support pack")->required();
  init_cmd->add_option("--size", init_opts.size, "coreset size m")->required();
  init_cmd->add_option("--seed", init_opts.seed)->capture_default_str();
  add_init_options(init_cmd, init_opts, "--strategy");
  init_cmd->add_option("--out", init_out, "snapshot path")->required();
  init_cmd->add_option("--report", init_report, "JSON summary");

  // update -------------------------------------------------------------------
  auto* update_cmd = app.add_subcommand("update", "optimize coreset keys with untapped samples");
  std::string upd_coreset, upd_pack, upd_out, upd_report;
  UpdateOptions upd_opts;
  update_cmd->add_option("--coreset", upd_coreset, "input snapshot")->required();
  update_cmd->add_option("--pack", upd_pack, "support or untapped pack; coreset members are skipped")->required();
  update_cmd->add_option("--seed", upd_opts.seed)->capture_default_str();
  add_update_options(update_cmd, upd_opts, true);
  update_cmd->add_option("--out", upd_out, "output snapshot")->required();
  update_cmd->add_option("--report", upd_report, "run report JSON");

  // stream -------------------------------------------------------------------
  auto* stream_cmd = app.add_subcommand("stream", "filling-based init plus per-sample updates over a stream");
  std::string str_pack, str_out, str_report;
  std::size_t str_size = 0;
  bool str_uneven = false;
  UpdateOptions str_opts;
  stream_cmd->add_option("--pack-stream", str_pack, "records in arrival order")->required();
  stream_cmd->add_option("--size", str_size, "coreset size m")->required();
  stream_cmd->add_option("--select", str_opts.select, "rs | ss | ds")->capture_default_str();
  stream_cmd->add_option("--alpha", str_opts.alpha)->capture_default_str();
  stream_cmd->add_option("--seed", str_opts.seed)->capture_default_str();
  stream_cmd->add_flag("--allow-uneven", str_uneven);
  stream_cmd->add_option("--out", str_out, "output snapshot")->required();
  stream_cmd->add_option("--report", str_report, "JSON summary");

  // retrieve -----------------------------------------------------------------
  auto* retrieve_cmd = app.add_subcommand("retrieve", "top-k demonstrations per query");
  std::string ret_coreset, ret_pack, ret_out, ret_order = "asc", ret_sim = "cosine";
  std::size_t ret_shots = 2;
  retrieve_cmd->add_option("--coreset", ret_coreset)->required();
  retrieve_cmd->add_option("--pack", ret_pack, "query pack")->required();
  retrieve_cmd->add_option("--shots", ret_shots)->capture_default_str();
  retrieve_cmd->add_option("--order", ret_order, "asc | desc")->capture_default_str();
  retrieve_cmd->add_option("--similarity", ret_sim, "cosine | dot")->capture_default_str();
  retrieve_cmd->add_option("--out", ret_out, "JSONL output (stdout when absent)");

  // prompts ------------------------------------------------------------------
  auto* prompts_cmd = app.add_subcommand("prompts", "emit multiple-choice in-context prompts");
  std::string pr_coreset, pr_test, pr_out, pr_order = "asc", pr_sim = "cosine";
  PromptOptions pr_opts;
  prompts_cmd->add_option("--coreset", pr_coreset)->required();
  prompts_cmd->add_option("--test", pr_test, "query pack")->required();
  prompts_cmd->add_option("--shots", pr_opts.shots)->capture_default_str();
  prompts_cmd->add_option("--seed", pr_opts.seed)->capture_default_str();
  prompts_cmd->add_option("--order", pr_order, "asc | desc")->capture_default_str();
  prompts_cmd->add_option("--similarity", pr_sim, "cosine | dot")->capture_default_str();
  prompts_cmd->add_option("--out", pr_out, "JSONL output")->required();

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "k-NN top-1 accuracy for baselines and KeCO variants");
  ExperimentOptions eval_opts;
  add_experiment_options(eval_cmd, eval_opts);

  // sweep --------------------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate across one or two hyperparameter axes");
  ExperimentOptions sweep_opts;
  add_experiment_options(sweep_cmd, sweep_opts);
  std::string axis, axis2;
  std::vector<double> values, values2;
  sweep_cmd->add_option("--axis", axis, "alpha | epochs | batch | ratio | coreset_size")->required();
  sweep_cmd->add_option("--values", values)->required()->delimiter(',');
  sweep_cmd->add_option("--axis2", axis2, "optional second axis (grid)");
  sweep_cmd->add_option("--values2", values2)->delimiter(',');

  // stats --------------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand("stats", "per-class key dispersion; optional CSV export");
  std::string st_coreset, st_csv;
  stats_cmd->add_option("--coreset", st_coreset)->required();
  stats_cmd->add_option("--emit-csv", st_csv, "PCA CSV path; dispersion goes to <stem>.dispersion.csv");

  // synth --------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic support and test packs");
  SyntheticSpec syn;
  std::string syn_support, syn_test, syn_format = "jsonl";
  synth_cmd->add_option("--classes", syn.classes)->capture_default_str();
  synth_cmd->add_option("--support-per-class", syn.support_per_class)->capture_default_str();
  synth_cmd->add_option("--test-per-class", syn.test_per_class)->capture_default_str();
  synth_cmd->add_option("--dim", syn.dim)->capture_default_str();
  synth_cmd->add_option("--center-scale", syn.center_scale)->capture_default_str();
  synth_cmd->add_option("--noise-scale", syn.noise_scale)->capture_default_str();
  synth_cmd->add_option("--seed", syn.seed)->capture_default_str();
  synth_cmd->add_option("--out-support", syn_support)->required();
  synth_cmd->add_option("--out-test", syn_test)->required();
  synth_cmd->add_option("--format", syn_format, "jsonl | binary")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    set_max_threads(threads);
    const json config_echo = resolved_config(app);

    if (init_cmd->parsed()) {
      const auto spec = init_opts.resolve();
      const auto pack = load_pack(init_pack);
      const auto coreset = initialize(pack, spec);
      save_snapshot(coreset, init_out);
      if (!init_report.empty())
        write_json(init_report, {{"command", "init"},
                                 {"resolved_config", config_echo},
                                 {"coreset_size", coreset.size()},
                                 {"shortfall", coreset.shortfall()},
                                 {"config_fingerprint", coreset.config_fingerprint()}});
      out << "wrote " << coreset.size() << " entries to " << init_out << "\n";
    } else if (update_cmd->parsed()) {
      const auto cfg = upd_opts.resolve();
      const auto coreset = load_snapshot(upd_coreset);
      const auto untapped = untapped_of(load_pack(upd_pack), coreset);
      auto result = run_update(coreset, untapped, cfg);
      save_snapshot(result.coreset, upd_out);
      if (!upd_report.empty()) {
        auto report = result.report.to_json();
        report["resolved_config"] = config_echo;
        write_json(upd_report, report);
      }
      const auto& last = result.report.per_epoch.back();
      out << "updated " << result.coreset.size() << " entries with " << untapped.size() << " untapped samples, "
          << cfg.epochs << " epochs x " << last.batches << " batches; dispersion "
          << result.report.initial_dispersion << " -> " << last.mean_intra_class_cosine_dispersion << "\n";
    } else if (stream_cmd->parsed()) {
      str_opts.epochs = 1;
      str_opts.batch_size = 1;
      const auto cfg = str_opts.resolve();
      const auto pack = load_pack(str_pack);
      CoresetBuilder builder(pack.dim(), pack.labels(), str_size, str_uneven,
                             "stream size=" + std::to_string(str_size) +
                                 " allow_uneven=" + std::to_string(str_uneven ? 1 : 0));
      std::size_t routed = 0;
      for (const auto& record : pack.records()) {
        if (filling_init_step(builder, record) == FillResult::Added) continue;
        online_update(builder.coreset(), record, cfg.strategy, cfg.alpha,
                      rs_stream_seed(cfg.seed, 0, routed, routed));
        ++routed;
      }
      const auto coreset = std::move(builder).finish();
      save_snapshot(coreset, str_out);
      if (!str_report.empty())
        write_json(str_report, {{"command", "stream"},
                                {"resolved_config", config_echo},
                                {"filled", coreset.size()},
                                {"updates", routed},
                                {"dispersion", dispersion_stats(coreset).mean_cosine_dispersion}});
      out << "filled " << coreset.size() << " entries, applied " << routed << " online updates\n";
    } else if (retrieve_cmd->parsed()) {
      const auto coreset = load_snapshot(ret_coreset);
      const auto queries = load_pack(ret_pack);
      const auto order = parse_demo_order(ret_order);
      const auto metric = parse_similarity_metric(ret_sim);
      std::string lines;
      for (const auto& q : queries.records()) {
        const auto result = retrieve_topk(coreset, q, ret_shots, metric);
        json demos = json::array();
        for (const auto& d : assemble_sequence(result, order))
          demos.push_back({{"index", d.index}, {"source_id", d.source_id}, {"label", d.label}, {"score", d.score}});
        lines += json{{"query_id", q.id}, {"shots", ret_shots}, {"demos", std::move(demos)}}.dump() + "\n";
      }
      if (ret_out.empty()) {
        out << lines;
      } else {
        io::atomic_write(ret_out, lines);
      }
    } else if (prompts_cmd->parsed()) {
      pr_opts.order = parse_demo_order(pr_order);
      pr_opts.metric = parse_similarity_metric(pr_sim);
      const auto n = emit_prompts(load_snapshot(pr_coreset), load_pack(pr_test), pr_opts, pr_out);
      out << "wrote " << n << " prompts to " << pr_out << "\n";
    } else if (eval_cmd->parsed()) {
      eval_opts.update.seed = eval_opts.init.seed;
      const auto results = evaluate(eval_opts.resolve());
      out << results.to_text();
      if (!eval_opts.out.empty()) {
        auto doc = results.to_json();
        doc["resolved_config"] = config_echo;
        write_json(eval_opts.out, doc);
      }
    } else if (sweep_cmd->parsed()) {
      sweep_opts.update.seed = sweep_opts.init.seed;
      const auto spec = sweep_opts.resolve();
      if (axis2.empty() != values2.empty())
        throw Error(ErrorCode::InvalidConfig, "--axis2 and --values2 go together");
      const auto table = axis2.empty() ? sweep(spec, parse_sweep_axis(axis), values)
                                       : sweep(spec, parse_sweep_axis(axis), values, parse_sweep_axis(axis2), values2);
      out << table.to_text();
      if (!sweep_opts.out.empty()) {
        auto doc = table.to_json();
        doc["resolved_config"] = config_echo;
        write_json(sweep_opts.out, doc);
      }
    } else if (stats_cmd->parsed()) {
      const auto coreset = load_snapshot(st_coreset);
      const auto stats = dispersion_stats(coreset);
      json per_class = json::array();
      for (const auto& d : stats.per_class)
        per_class.push_back({{"label", d.label},
                             {"count", d.count},
                             {"mean_pairwise_cosine_distance", d.mean_pairwise_cosine_distance},
                             {"mean_distance_to_centroid", d.mean_distance_to_centroid}});
      out << json{{"entries", coreset.size()},
                  {"mean_cosine_dispersion", stats.mean_cosine_dispersion},
                  {"mean_centroid_distance", stats.mean_centroid_distance},
                  {"per_class", std::move(per_class)}}
                 .dump(2)
          << "\n";
      if (!st_csv.empty()) {
        io::atomic_write(st_csv, pca_csv(coreset));
        auto disp_path = std::filesystem::path(st_csv);
        disp_path.replace_extension(".dispersion.csv");
        io::atomic_write(disp_path, dispersion_csv(stats));
      }
    } else if (synth_cmd->parsed()) {
      if (syn.noise_dominates())
        err << "warning: noise scale " << syn.noise_scale << " >= center scale " << syn.center_scale << "\n";
      const auto format = syn_format == "binary" ? PackFormat::Binary
                          : syn_format == "jsonl"
                              ? PackFormat::Jsonl
                              : throw Error(ErrorCode::InvalidConfig, "--format must be jsonl or binary");
      const auto [support, test] = generate_synthetic(syn);
      save_pack(support, syn_support, format);
      save_pack(test, syn_test, format);
      out << "wrote " << support.size() << " support and " << test.size() << " test records\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Validation: return kExitValidation;
      case ErrorKind::Io: return kExitIo;
      case ErrorKind::Internal: return kExitInternal;
    }
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace keco::cli
