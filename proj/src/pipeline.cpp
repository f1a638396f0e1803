#include "proxyrank/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <regex>
#include <set>

#include "proxyrank/annotate.hpp"
#include "proxyrank/controls.hpp"
#include "proxyrank/corpus.hpp"
#include "proxyrank/error.hpp"
#include "proxyrank/genclient.hpp"
#include "proxyrank/report.hpp"
#include "proxyrank/scorer.hpp"
#include "proxyrank/stats.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kCommands = {"ingest", "generate", "controls", "score",
                                            "rank",   "ita",      "report",   "serve-annotate"};

class ConfigView {
 public:
  ConfigView(json cfg, std::string section) : cfg_(std::move(cfg)), section_(std::move(section)) {}

  template <typename T>
  void get(const std::string& key, T& var) const {
    if (const json* v = find(key)) {
      try {
        var = v->get<T>();
      } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' has the wrong type");
      }
    }
  }

  const json* find(const std::string& key) const {
    if (!cfg_.is_object()) return nullptr;
    if (auto sec = cfg_.find(section_); sec != cfg_.end() && sec->is_object()) {
      if (auto it = sec->find(key); it != sec->end()) return &*it;
    }
    if (auto it = cfg_.find(key); it != cfg_.end()) return &*it;
    return nullptr;
  }

 private:
  json cfg_;
  std::string section_;
};

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

TaskKind require_task(const std::string& token) {
  if (token.empty()) throw Error(ErrorCode::InvalidConfig, "--task is required");
  auto t = parse_task(token);
  if (!t) throw Error(ErrorCode::InvalidConfig, "unknown task '" + token + "'");
  return *t;
}

std::optional<TaskKind> optional_task(const std::string& token) {
  if (token.empty()) return std::nullopt;
  return require_task(token);
}

void require_value(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidConfig, std::string(flag) + " is required");
}

void check_input(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::Io, "input not found: " + p.string());
}

// Outputs are never silently replaced; a rerun either targets a new path or
// says --resume.
void prepare_output(const fs::path& p, bool resume) {
  if (fs::exists(p) && !resume) {
    throw Error(ErrorCode::InvalidConfig, "refusing to overwrite " + p.string() + " (use --resume or a new path)");
  }
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_meta(const fs::path& artifact, const std::string& command, const std::vector<std::string>& args) {
  std::ofstream out(artifact.string() + ".meta.json", std::ios::binary | std::ios::trunc);
  out << json{{"command", command}, {"args", args}, {"created_at", now_iso8601()}}.dump(2) << '\n';
}

std::vector<ProxyInstance> load_instances(const fs::path& path, TaskKind task, const std::string& split,
                                          std::ostream& err) {
  check_input(path);
  auto parsed = corpus::parse_dataset(path, task);
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
  if (split.empty()) return std::move(parsed.instances);
  auto s = parse_split(split);
  if (!s) throw Error(ErrorCode::InvalidConfig, "unknown split '" + split + "'");
  std::vector<ProxyInstance> out;
  for (auto& inst : parsed.instances) {
    if (split_of(inst) == s) out.push_back(std::move(inst));
  }
  return out;
}

std::unique_ptr<scorer::ScorerBackend> make_backend(const std::string& url, std::size_t batch_size) {
  if (url.rfind("mock:", 0) == 0) {
    return std::make_unique<scorer::TableScorerBackend>(scorer::TableScorerBackend::load(url.substr(5)));
  }
  return std::make_unique<scorer::HttpScorerBackend>(http::Endpoint{url, 30000, 2, 200, {}}, batch_size);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct Common {
  std::string task;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool resume = false;
};

struct IngestOpts {
  std::string input;
  std::vector<double> fractions = {0.70, 0.15, 0.15};
  bool neutralize = false;
  std::string overrides;
  bool permute = false;
  bool permute_test = false;
  bool evidence_subset = false;
};

int run_ingest(const Common& c, const IngestOpts& o, const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  const auto task = require_task(c.task);
  require_value(o.input, "--input");
  require_value(c.out, "--out");
  if (o.fractions.size() != 3) throw Error(ErrorCode::BadFractions, "--fractions takes three values");
  const fs::path dir(c.out);
  const auto dataset_path = dir / "dataset.jsonl";
  prepare_output(dataset_path, c.resume);

  auto instances = load_instances(o.input, task, "", err);
  if (o.evidence_subset) {
    if (task != TaskKind::Misinfo) throw Error(ErrorCode::InvalidConfig, "--evidence-subset applies to misinfo only");
    std::vector<MisinfoInstance> m;
    for (const auto& i : instances) m.push_back(std::get<MisinfoInstance>(i));
    auto subset = corpus::filter_evidence_subset(m);
    if (subset.warning) err << "warning: " << *subset.warning << "\n";
    instances.assign(subset.instances.begin(), subset.instances.end());
  }
  if (o.neutralize) {
    if (task != TaskKind::Mmcqa) throw Error(ErrorCode::InvalidConfig, "--neutralize applies to mmcqa only");
    auto cfg = corpus::NeutralizationConfig::defaults();
    if (!o.overrides.empty()) {
      check_input(o.overrides);
      cfg.overrides = corpus::load_overrides(o.overrides);
    }
    std::ofstream unresolved(dir / "neutralization_unresolved.jsonl", std::ios::binary | std::ios::trunc);
    for (auto& inst : instances) {
      auto& q = std::get<MmcqaInstance>(inst);
      auto res = corpus::neutralize_instance(q, cfg);
      q.gold_explanation = res.text;
      if (!res.unresolved.empty()) {
        unresolved << json{{"id", q.id}, {"unresolved", res.unresolved}}.dump() << '\n';
        err << "warning: " << q.id << ": " << res.unresolved.size() << " unresolved positional reference(s)\n";
      }
    }
  }
  const corpus::SplitFractions fr{o.fractions[0], o.fractions[1], o.fractions[2]};
  const auto assignment = corpus::stratified_split(instances, fr, c.seed);
  for (auto& inst : instances) set_split(inst, assignment.by_id.at(instance_id(inst)));
  corpus::write_dataset(dataset_path, instances);

  const auto sizes = assignment.sizes();
  std::ofstream(dir / "splits.json", std::ios::binary | std::ios::trunc)
      << json{{"seed", c.seed}, {"fractions", o.fractions}, {"train", sizes[0]}, {"dev", sizes[1]}, {"test", sizes[2]}}
             .dump(2)
      << '\n';
  if (o.permute) {
    if (task != TaskKind::Mmcqa) throw Error(ErrorCode::InvalidConfig, "--permute applies to mmcqa only");
    std::vector<ProxyInstance> variants;
    for (const auto& inst : instances) {
      const auto split = split_of(inst);
      if (split != Split::Train && !(o.permute_test && split == Split::Test)) continue;
      for (auto& v : corpus::permute_answer_positions(std::get<MmcqaInstance>(inst))) variants.emplace_back(std::move(v));
    }
    corpus::write_dataset(dir / "permuted.jsonl", variants);
  }
  write_meta(dataset_path, "ingest", args);
  out << "ingested " << instances.size() << " instances: train " << sizes[0] << ", dev " << sizes[1] << ", test "
      << sizes[2] << "\n";
  return kExitOk;
}

struct GenerateOpts {
  std::string dataset;
  std::string split;
  std::string params;
  std::string template_path;
  std::vector<std::string> providers;
  std::string provider_url;
  std::string model;
  std::size_t max_in_flight = 4;
  std::string batch;
};

int run_generate(const Common& c, const GenerateOpts& o, const ConfigView& cfg, const std::vector<std::string>& args,
                 std::ostream& out, std::ostream& err) {
  const auto task = require_task(c.task);
  require_value(o.dataset, "--dataset");
  require_value(c.out, "--out");
  prepare_output(c.out, c.resume);
  const auto instances = load_instances(o.dataset, task, o.split, err);

  gen::GenerationParams params;
  if (!o.params.empty()) {
    check_input(o.params);
    params = gen::load_params(o.params);
  } else if (const json* g = cfg.find("generation")) {
    params = gen::params_from_json(*g);
  }
  if (c.seed != 0) params.seed = c.seed;
  const auto tmpl = o.template_path.empty() ? gen::default_template(task) : gen::load_template(o.template_path);

  std::vector<gen::Provider> providers;
  static const std::regex spec_re(R"(^([^=]+)=([^@]+)@(.+)$)");
  for (const auto& p : o.providers) {
    std::smatch m;
    if (!std::regex_match(p, m, spec_re)) throw Error(ErrorCode::InvalidConfig, "--provider expects ID=MODEL@URL");
    providers.push_back({m[1], m[2], std::make_shared<gen::HttpChatEndpoint>(http::Endpoint{m[3], 60000, 2, 500, {}})});
  }
  if (!o.provider_url.empty()) {
    require_value(o.model, "--model");
    providers.push_back({o.model, o.model,
                         std::make_shared<gen::HttpChatEndpoint>(http::Endpoint{o.provider_url, 60000, 2, 500, {}})});
  }
  if (providers.empty()) {
    if (const json* list = cfg.find("providers")) {
      for (const auto& p : *list) {
        providers.push_back({p.at("provider_id").get<std::string>(), p.at("model").get<std::string>(),
                             std::make_shared<gen::HttpChatEndpoint>(
                                 http::Endpoint{p.at("url").get<std::string>(), p.value("timeout_ms", 60000), 2, 500, {}})});
      }
    }
  }
  if (providers.empty()) throw Error(ErrorCode::InvalidConfig, "no providers (use --provider or the config file)");

  gen::GenerationOptions opts;
  opts.output = c.out;
  opts.max_in_flight = o.max_in_flight;
  opts.resume = c.resume;
  opts.batch_id = o.batch;
  const auto result = gen::generate(instances, tmpl, params, providers, opts);
  write_meta(c.out, "generate", args);
  out << "generated " << result.records.size() << " arguments, " << result.failed.size() << " failed\n";
  if (result.failed.empty()) return kExitOk;
  bool unavailable = false;
  for (const auto& f : result.failed) {
    err << "failed: " << f.instance_id << " / " << f.provider_id << ": " << f.code << "\n";
    unavailable = unavailable || f.code == to_string(ErrorCode::BackendUnavailable) ||
                  f.code == to_string(ErrorCode::RateLimited);
  }
  return unavailable ? kExitBackendUnavailable : kExitValidation;
}

struct ControlsOpts {
  std::string dataset;
  std::string split;
  std::string kind;
  std::string corpus;
  std::size_t chunk_size = 300;
  std::size_t top_docs = 5;
  std::size_t top_passages = 3;
  std::string embed_url;
  std::string rerank_url;
};

int run_controls(const Common& c, const ControlsOpts& o, const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
  const auto task = require_task(c.task);
  require_value(o.dataset, "--dataset");
  require_value(c.out, "--out");
  static const std::map<std::string, ControlKind> kShortKinds = {
      {"no-arg", ControlKind::NoArgument}, {"label-only", ControlKind::LabelOnly}, {"ir", ControlKind::IrPassages}};
  auto kind = parse_control_kind(o.kind);
  if (auto it = kShortKinds.find(o.kind); !kind && it != kShortKinds.end()) kind = it->second;
  if (!kind) throw Error(ErrorCode::InvalidConfig, "--kind must be no-arg, label-only, noise or ir");
  prepare_output(c.out, c.resume);
  const auto instances = load_instances(o.dataset, task, o.split, err);

  std::vector<ArgumentVariant> variants;
  switch (*kind) {
    case ControlKind::NoArgument:
      for (const auto& i : instances) variants.push_back(controls::make_no_argument(i));
      break;
    case ControlKind::LabelOnly:
      for (const auto& i : instances) variants.push_back(controls::make_label_only(i));
      break;
    case ControlKind::Noise:
      variants = controls::make_noise(instances, c.seed);
      break;
    case ControlKind::IrPassages: {
      require_value(o.corpus, "--corpus");
      check_input(o.corpus);
      controls::RetrievalConfig rc;
      rc.chunk_size = o.chunk_size;
      rc.top_docs = o.top_docs;
      rc.top_passages = o.top_passages;
      if (!o.embed_url.empty() || !o.rerank_url.empty()) {
        require_value(o.embed_url, "--embed-url");
        require_value(o.rerank_url, "--rerank-url");
        rc.backend = controls::RetrievalBackend::RemoteEmbedding;
        rc.remote.embed_url = o.embed_url;
        rc.remote.rerank_url = o.rerank_url;
      }
      const auto index = controls::PassageIndex::build(controls::load_documents(o.corpus), rc);
      for (const auto& i : instances) {
        const auto passages = index.retrieve(controls::retrieval_query(i), rc);
        variants.push_back(controls::make_ir_variant(i, passages));
      }
      break;
    }
  }
  corpus::write_arguments(c.out, variants);
  write_meta(c.out, "controls", args);
  out << "wrote " << variants.size() << " " << o.kind << " arguments\n";
  return kExitOk;
}

struct ScoreOpts {
  std::string dataset;
  std::string split;
  std::vector<std::string> arguments;
  bool gold = false;
  std::string evaluator;
  std::string scorer_url;
  std::vector<std::string> ensemble;
  std::string semantics = "gold_label_probability";
  bool evidence_subset = false;
  bool allow_baseline_argument = false;
  std::size_t batch_size = 64;
};

int run_score(const Common& c, const ScoreOpts& o, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  const auto task = require_task(c.task);
  require_value(o.dataset, "--dataset");
  require_value(c.out, "--out");
  const auto evaluator = scorer::parse_evaluator_kind(o.evaluator);
  if (!evaluator) throw Error(ErrorCode::InvalidConfig, "--evaluator must be baseline, expert_trained or llm_trained");
  const auto semantics = scorer::parse_semantics(o.semantics);
  if (!semantics) throw Error(ErrorCode::InvalidConfig, "unknown --semantics");
  std::vector<std::string> urls;
  if (!o.scorer_url.empty()) urls.push_back(o.scorer_url);
  urls.insert(urls.end(), o.ensemble.begin(), o.ensemble.end());
  if (urls.empty()) throw Error(ErrorCode::InvalidConfig, "--scorer-url or --ensemble is required");
  prepare_output(c.out, c.resume);

  auto instances = load_instances(o.dataset, task, o.split, err);
  if (o.evidence_subset) {
    std::erase_if(instances, [](const ProxyInstance& i) {
      const auto* m = std::get_if<MisinfoInstance>(&i);
      return m && m->label == MisinfoLabel::NotEnoughEvidence;
    });
  }

  // system id -> instance id -> argument
  std::map<std::string, std::map<std::string, ArgumentVariant>> systems;
  for (const auto& path : o.arguments) {
    check_input(path);
    for (auto& a : corpus::read_arguments(path)) {
      auto& slot = systems[a.system_id];
      if (!slot.emplace(a.instance_id, a).second) {
        throw Error(ErrorCode::DuplicateId, "two arguments of " + a.system_id + " for " + a.instance_id);
      }
    }
  }
  if (o.gold) {
    for (const auto& i : instances) systems[std::string(kGoldSystemId)].emplace(instance_id(i), make_gold_argument(i));
  }
  const bool no_arguments = systems.empty();
  if (no_arguments && *evaluator != scorer::EvaluatorKind::Baseline) {
    throw Error(ErrorCode::ArgumentRequired, "no arguments given (use --arguments or --gold)");
  }

  std::vector<std::unique_ptr<scorer::ScorerBackend>> owned;
  std::vector<scorer::ScorerBackend*> members;
  for (const auto& u : urls) {
    owned.push_back(make_backend(u, o.batch_size));
    members.push_back(owned.back().get());
  }

  const scorer::AssembleOptions aopts{o.evidence_subset, o.allow_baseline_argument};
  std::vector<scorer::ScoreRecord> records;
  std::vector<scorer::ItemRejection> rejected;
  auto score_system = [&](const std::string& system_id, const std::map<std::string, ArgumentVariant>* args_by_id) {
    scorer::ScoreRequest req{task, *evaluator, system_id, {}};
    std::size_t missing = 0;
    for (const auto& i : instances) {
      const ArgumentVariant* arg = nullptr;
      if (args_by_id) {
        auto it = args_by_id->find(instance_id(i));
        if (it == args_by_id->end()) {
          ++missing;
          continue;
        }
        arg = &it->second;
      }
      req.items.push_back(scorer::assemble_input(i, arg, *evaluator, aopts));
    }
    if (missing) err << "warning: " << system_id << " has no argument for " << missing << " instance(s)\n";
    if (req.items.empty()) return;
    auto col = scorer::score_ensemble(req, members, *semantics);
    for (auto r : col.rejected) {
      r.instance_id += " (" + system_id + ")";
      rejected.push_back(std::move(r));
    }
    auto recs = scorer::to_records(col, o.evaluator);
    records.insert(records.end(), recs.begin(), recs.end());
  };
  if (no_arguments) {
    score_system("none", nullptr);
  } else {
    for (const auto& [system_id, by_id] : systems) score_system(system_id, &by_id);
  }

  scorer::write_scores(c.out, records);
  write_meta(c.out, "score", args);
  out << "scored " << records.size() << " (instance, system) pairs with " << o.evaluator << "\n";
  if (!rejected.empty()) {
    std::ofstream rej(c.out + ".rejected.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& r : rejected) {
      rej << json{{"item", r.instance_id}, {"error", to_string(r.code)}, {"message", r.message}}.dump() << '\n';
      err << "rejected: " << r.instance_id << ": " << r.message << "\n";
    }
    return kExitValidation;
  }
  return kExitOk;
}

struct RankOpts {
  std::vector<std::string> scores;
  std::vector<std::string> evaluators;
  std::string direction = "higher-better";
  double alpha = 0.05;
  std::string method = "auto";
  std::string annotations;
  std::string text_out;
};

int run_rank(const Common& c, const RankOpts& o, bool with_humans, const std::vector<std::string>& args,
             std::ostream& out, std::ostream& err) {
  if (o.scores.empty()) throw Error(ErrorCode::InvalidConfig, "--scores is required");
  require_value(c.out, "--out");
  const auto task = optional_task(c.task);
  const auto direction = stats::parse_direction(o.direction);
  if (!direction) throw Error(ErrorCode::InvalidConfig, "--direction must be higher-better or lower-better");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "--alpha must be in (0, 1)");
  report::ReportOptions ropts;
  ropts.alpha = o.alpha;
  ropts.direction = *direction;
  if (o.method == "auto") {
    ropts.friedman.method = stats::PValueMethod::Auto;
  } else if (o.method == "chi_square") {
    ropts.friedman.method = stats::PValueMethod::ChiSquare;
  } else if (o.method == "exact") {
    ropts.friedman.method = stats::PValueMethod::Exact;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--p-method must be auto, chi_square or exact");
  }
  for (const auto& s : o.scores) check_input(s);
  const fs::path text_path = o.text_out.empty() ? fs::path(c.out).replace_extension(".txt") : fs::path(o.text_out);
  prepare_output(c.out, c.resume);
  prepare_output(text_path, c.resume);

  std::vector<scorer::ScoreRecord> records;
  for (const auto& s : o.scores) {
    auto part = scorer::read_scores(s);
    records.insert(records.end(), part.begin(), part.end());
  }
  auto names = o.evaluators.empty() ? scorer::evaluators_in(records) : o.evaluators;
  std::vector<report::EvaluatorInput> inputs;
  for (const auto& name : names) inputs.push_back({name, scorer::matrix_from_records(records, name)});

  std::vector<stats::HumanGradeSheet> sheets;
  if (with_humans && !o.annotations.empty()) {
    check_input(o.annotations);
    sheets = stats::read_sheets(o.annotations);
  }
  const auto rep = report::build_report(task, inputs, sheets, ropts);
  std::ofstream(c.out, std::ios::binary | std::ios::trunc) << report::to_json(rep).dump(2) << '\n';
  const auto grid = report::render_text(rep);
  std::ofstream(text_path, std::ios::binary | std::ios::trunc) << grid;
  write_meta(c.out, with_humans ? "report" : "rank", args);
  out << grid;
  if (report::has_degenerate_statistics(rep)) {
    err << "warning: degenerate Friedman test (every block tied); report written\n";
    return kExitDegenerate;
  }
  return kExitOk;
}

struct ItaOpts {
  std::string annotations;
  std::string metric = "ordinal";
};

int run_ita(const Common& c, const ItaOpts& o, const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  require_value(o.annotations, "--annotations");
  check_input(o.annotations);
  const auto metric = stats::parse_metric(o.metric);
  if (!metric) throw Error(ErrorCode::InvalidConfig, "--metric must be nominal, ordinal or interval");
  const auto sheets = stats::read_sheets(o.annotations);
  stats::AlphaResult res;
  try {
    res = stats::krippendorff_alpha(sheets, *metric);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndefinedExpectedDisagreement) throw;
    err << "error: " << e.what() << "\n";
    return kExitDegenerate;
  }
  const json j{{"alpha", res.alpha},
               {"metric", stats::to_token(res.metric)},
               {"n_units", res.n_units},
               {"n_raters", res.n_raters},
               {"n_pairable_values", res.n_pairable_values}};
  if (!c.out.empty()) {
    prepare_output(c.out, c.resume);
    std::ofstream(c.out, std::ios::binary | std::ios::trunc) << j.dump(2) << '\n';
    write_meta(c.out, "ita", args);
  }
  out << j.dump() << "\n";
  return kExitOk;
}

struct ServeOpts {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store;
  std::string dataset;
};

int run_serve(const Common& c, const ServeOpts& o, std::ostream& out, std::ostream& err) {
  require_value(o.store, "--store");
  annotate::AnnotationStore store(o.store);
  if (!o.dataset.empty()) {
    std::set<std::string> ids;
    for (const auto& i : load_instances(o.dataset, require_task(c.task), "", err)) ids.insert(instance_id(i));
    store.set_catalog(std::move(ids));
  }
  annotate::AnnotateServer server(store);
  const int port = server.bind(o.host, o.port);
  if (port < 0) throw Error(ErrorCode::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
  out << "serving annotation sessions on http://" << o.host << ":" << port << "\n" << std::flush;
  server.listen();
  return kExitOk;
}

std::string scan_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

std::string scan_command(const std::vector<std::string>& args) {
  for (const auto& a : args) {
    if (std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end()) return a;
  }
  return {};
}

}  // namespace

std::string interpolate_env(std::string_view s) {
  static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
  std::string in(s), out;
  auto begin = std::sregex_iterator(in.begin(), in.end(), var);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(in, last, static_cast<std::size_t>(m.position()) - last);
    const char* value = std::getenv(m[1].str().c_str());
    if (!value) throw Error(ErrorCode::InvalidConfig, "environment variable " + m[1].str() + " is not set");
    out += value;
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  out.append(in, last);
  return out;
}

namespace {

json interpolate(const json& j) {
  if (j.is_string()) return interpolate_env(j.get<std::string>());
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(interpolate(v));
    return out;
  }
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = interpolate(v);
    return out;
  }
  return j;
}

}  // namespace

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  return interpolate(j);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    const auto command = scan_command(args);
    json cfg_json = json::object();
    if (auto p = scan_config_path(args); !p.empty()) cfg_json = load_config(p);
    const ConfigView cfg(cfg_json, command);

    Common c;
    IngestOpts ingest;
    GenerateOpts generate;
    ControlsOpts ctl;
    ScoreOpts score;
    RankOpts rank;
    ItaOpts ita;
    ServeOpts serve;

    // Config values become the defaults; flags given on the command line win.
    cfg.get("task", c.task);
    cfg.get("seed", c.seed);
    cfg.get("out", c.out);
    cfg.get("resume", c.resume);
    cfg.get("input", ingest.input);
    cfg.get("fractions", ingest.fractions);
    cfg.get("neutralize", ingest.neutralize);
    cfg.get("overrides", ingest.overrides);
    cfg.get("permute", ingest.permute);
    cfg.get("permute_test", ingest.permute_test);
    cfg.get("evidence_subset", ingest.evidence_subset);
    for (auto* d : {&generate.dataset, &ctl.dataset, &score.dataset, &serve.dataset}) cfg.get("dataset", *d);
    for (auto* s : {&generate.split, &ctl.split, &score.split}) cfg.get("split", *s);
    cfg.get("params", generate.params);
    cfg.get("template", generate.template_path);
    cfg.get("max_in_flight", generate.max_in_flight);
    cfg.get("batch", generate.batch);
    cfg.get("provider_url", generate.provider_url);
    cfg.get("model", generate.model);
    cfg.get("kind", ctl.kind);
    cfg.get("corpus", ctl.corpus);
    cfg.get("chunk_size", ctl.chunk_size);
    cfg.get("top_docs", ctl.top_docs);
    cfg.get("top_passages", ctl.top_passages);
    cfg.get("embed_url", ctl.embed_url);
    cfg.get("rerank_url", ctl.rerank_url);
    cfg.get("arguments", score.arguments);
    cfg.get("gold", score.gold);
    cfg.get("evaluator", score.evaluator);
    cfg.get("scorer_url", score.scorer_url);
    cfg.get("ensemble", score.ensemble);
    cfg.get("semantics", score.semantics);
    cfg.get("evidence_subset", score.evidence_subset);
    cfg.get("allow_baseline_argument", score.allow_baseline_argument);
    cfg.get("batch_size", score.batch_size);
    cfg.get("scores", rank.scores);
    cfg.get("evaluators", rank.evaluators);
    cfg.get("direction", rank.direction);
    cfg.get("alpha", rank.alpha);
    cfg.get("p_method", rank.method);
    cfg.get("annotations", rank.annotations);
    cfg.get("text", rank.text_out);
    cfg.get("annotations", ita.annotations);
    cfg.get("metric", ita.metric);
    cfg.get("host", serve.host);
    cfg.get("port", serve.port);
    cfg.get("store", serve.store);

    CLI::App app{"Argument ranking harness for medical proxy tasks", "proxyrank"};
    app.require_subcommand(1);
    auto common = [&c](CLI::App* sub) {
      sub->add_option("--task", c.task, "mmcqa, misinfo or clinical_nli");
      sub->add_option("--config", c.config, "JSON config file; ${VAR} is read from the environment");
      sub->add_option("--seed", c.seed, "Random seed");
      sub->add_option("--out", c.out, "Output path");
      sub->add_flag("--resume", c.resume, "Continue into / overwrite an existing output");
    };

    auto* s_ingest = app.add_subcommand("ingest", "Validate a dataset, split it and preprocess it");
    common(s_ingest);
    s_ingest->add_option("--input", ingest.input, "Raw dataset JSONL");
    s_ingest->add_option("--fractions", ingest.fractions, "train,dev,test fractions")->delimiter(',');
    s_ingest->add_flag("--neutralize", ingest.neutralize, "Neutralize MMCQA explanations");
    s_ingest->add_option("--overrides", ingest.overrides, "JSONL {id, text} of manual neutralizations");
    s_ingest->add_flag("--permute", ingest.permute, "Write answer-position variants of the train split");
    s_ingest->add_flag("--permute-test", ingest.permute_test, "Also permute the test split");
    s_ingest->add_flag("--evidence-subset", ingest.evidence_subset, "Keep supported/refuted misinfo claims");

    auto* s_generate = app.add_subcommand("generate", "Generate arguments with chat models");
    common(s_generate);
    s_generate->add_option("--dataset", generate.dataset, "Dataset JSONL");
    s_generate->add_option("--split", generate.split, "Only instances of this split");
    s_generate->add_option("--params,--params-file", generate.params, "Generation parameters JSON");
    s_generate->add_option("--template", generate.template_path, "Prompt template JSON");
    s_generate->add_option("--provider", generate.providers, "ID=MODEL@URL, repeatable");
    s_generate->add_option("--provider-url", generate.provider_url, "Chat endpoint base URL (with --model)");
    s_generate->add_option("--model", generate.model, "Model name; also the provider id");
    s_generate->add_option("--max-in-flight", generate.max_in_flight, "Concurrent requests");
    s_generate->add_option("--batch", generate.batch, "Batch label recorded with each argument");

    auto* s_controls = app.add_subcommand("controls", "Build control-case arguments");
    common(s_controls);
    s_controls->add_option("--dataset", ctl.dataset, "Dataset JSONL");
    s_controls->add_option("--split", ctl.split, "Only instances of this split");
    s_controls->add_option("--kind", ctl.kind, "no-arg, label-only, noise or ir");
    s_controls->add_option("--corpus", ctl.corpus, "Document directory or JSONL for ir_passages");
    s_controls->add_option("--chunk-size", ctl.chunk_size, "Passage length in characters");
    s_controls->add_option("--top-docs", ctl.top_docs, "Documents kept after the first stage");
    s_controls->add_option("--top-passages", ctl.top_passages, "Passages kept after reranking");
    s_controls->add_option("--embed-url", ctl.embed_url, "Embedding service base URL");
    s_controls->add_option("--rerank-url", ctl.rerank_url, "Rerank service base URL");

    auto* s_score = app.add_subcommand("score", "Score arguments with an evaluator");
    common(s_score);
    s_score->add_option("--dataset", score.dataset, "Dataset JSONL");
    s_score->add_option("--split", score.split, "Only instances of this split");
    s_score->add_option("--arguments", score.arguments, "Argument JSONL, repeatable");
    s_score->add_flag("--gold", score.gold, "Also score the gold arguments");
    s_score->add_option("--evaluator", score.evaluator, "baseline, expert_trained or llm_trained");
    s_score->add_option("--scorer-url", score.scorer_url, "Scorer base URL or mock:TABLE.jsonl");
    s_score->add_option("--ensemble", score.ensemble, "Further scorer URLs whose distributions are averaged")
        ->delimiter(',');
    s_score->add_option("--semantics", score.semantics, "gold_label_probability or correctness_0_1");
    s_score->add_flag("--evidence-subset", score.evidence_subset, "Two-label misinfo subset");
    s_score->add_flag("--allow-baseline-argument", score.allow_baseline_argument,
                      "Attach arguments to baseline inputs");
    s_score->add_option("--batch-size", score.batch_size, "Items per scorer request");

    auto rank_options = [&rank](CLI::App* sub) {
      sub->add_option("--scores", rank.scores, "Score JSONL, repeatable");
      sub->add_option("--evaluator", rank.evaluators, "Only these evaluators");
      sub->add_option("--direction", rank.direction, "higher-better or lower-better");
      sub->add_option("--alpha", rank.alpha, "Significance level");
      sub->add_option("--p-method", rank.method, "auto, chi_square or exact");
      sub->add_option("--text", rank.text_out, "Plain-text grid path (default: --out with .txt)");
    };
    auto* s_rank = app.add_subcommand("rank", "Rank systems per evaluator");
    common(s_rank);
    rank_options(s_rank);
    auto* s_report = app.add_subcommand("report", "Ranking report with optional human grades");
    common(s_report);
    rank_options(s_report);
    s_report->add_option("--annotations", rank.annotations, "Human grade sheets JSONL");

    auto* s_ita = app.add_subcommand("ita", "Inter-annotator agreement");
    common(s_ita);
    s_ita->add_option("--annotations", ita.annotations, "Human grade sheets JSONL");
    s_ita->add_option("--metric", ita.metric, "nominal, ordinal or interval");

    auto* s_serve = app.add_subcommand("serve-annotate", "Serve annotation sessions over HTTP");
    common(s_serve);
    s_serve->add_option("--host", serve.host, "Bind address");
    s_serve->add_option("--port", serve.port, "Port");
    s_serve->add_option("--store", serve.store, "Session store directory");
    s_serve->add_option("--dataset", serve.dataset, "Dataset whose ids may be annotated");

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitValidation;
    }

    if (s_ingest->parsed()) return run_ingest(c, ingest, args, out, err);
    if (s_generate->parsed()) return run_generate(c, generate, cfg, args, out, err);
    if (s_controls->parsed()) return run_controls(c, ctl, args, out, err);
    if (s_score->parsed()) return run_score(c, score, args, out, err);
    if (s_rank->parsed()) return run_rank(c, rank, false, args, out, err);
    if (s_report->parsed()) return run_rank(c, rank, true, args, out, err);
    if (s_ita->parsed()) return run_ita(c, ita, args, out, err);
    if (s_serve->parsed()) return run_serve(c, serve, out, err);
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::BackendUnavailable ? kExitBackendUnavailable : kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace proxyrank::pipeline
