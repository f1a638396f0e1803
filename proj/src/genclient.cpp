#include "proxyrank/genclient.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "proxyrank/error.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::gen {

using nlohmann::json;

namespace {

const char* const kNliExemplarEvidences =
#include "nli_exemplar.inc"
    ;

std::set<std::string> placeholders_in(const std::string& s) {
  static const std::regex re(R"(\{([a-z_0-9]+)\})");
  std::set<std::string> out;
  for (std::sregex_iterator it(s.begin(), s.end(), re), end; it != end; ++it) out.insert((*it)[1].str());
  return out;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, std::string> fill_values(const ProxyInstance& inst) {
  std::map<std::string, std::string> v;
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) {
    v["case_question"] = q->clinical_case + " " + q->question;
    for (std::size_t i = 0; i < q->options.size(); ++i) {
      v["ans" + std::to_string(i + 1)] = std::to_string(i + 1) + "- " + q->options[i];
    }
  } else if (const auto* m = std::get_if<MisinfoInstance>(&inst)) {
    v["question"] = m->claim;
  } else {
    const auto& n = std::get<NliInstance>(inst);
    v["statement"] = n.statement;
    v["evidences"] = n.full_section;
  }
  return v;
}

using PairKey = std::pair<std::string, std::string>;

void append_line(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << j.dump() << '\n';
  out.flush();
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto j = json::parse(line, nullptr, false);
    // A torn final line from a crash is ignored; the pair is simply redone.
    if (!j.is_discarded()) out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

void GenerationParams::validate() const {
  if (max_new_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_new_tokens must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "top_p must be in (0, 1]");
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.max_new_tokens = j.value("max_new_tokens", p.max_new_tokens);
  p.temperature = j.value("temperature", p.temperature);
  p.top_p = j.value("top_p", p.top_p);
  p.sampling = j.value("sampling", p.sampling);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
  p.validate();
  return p;
}

GenerationParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidConfig, "params file must be a JSON object");
  return params_from_json(j);
}

std::set<std::string> required_placeholders(TaskKind task) {
  switch (task) {
    case TaskKind::Mmcqa: return {"case_question", "ans1", "ans2", "ans3", "ans4", "ans5"};
    case TaskKind::Misinfo: return {"question"};
    case TaskKind::ClinicalNli: return {"statement", "evidences"};
  }
  return {};
}

void PromptTemplate::validate() const {
  if (!placeholders_in(system_text).empty() || !placeholders_in(exemplar).empty()) {
    throw Error(ErrorCode::InvalidConfig, "placeholders are only allowed in the user text");
  }
  if (placeholders_in(user_text) != required_placeholders(task)) {
    throw Error(ErrorCode::InvalidConfig, "user text placeholders do not match the task");
  }
  if (text::trim(exemplar).empty()) throw Error(ErrorCode::InvalidConfig, "a one-shot exemplar is required");
}

PromptTemplate default_template(TaskKind task) {
  PromptTemplate t;
  t.task = task;
  switch (task) {
    case TaskKind::Mmcqa:
      t.system_text =
          "You are a medical student and given a medical case, a question and five possible answers, tell me "
          "which is the correct answer and argument in favor of it.";
      t.exemplar =
          "A medical case and a question related to it <casequestion> After a traffic accident a 38-year-old "
          "patient is admitted to the ICU in coma. After several days the patient does not improve "
          "neurologically and a CT scan shows hemorrhagic punctate lesions in the corpus callosum and "
          "cortico-subcortical junction. What is the diagnosis?\n"
          "<\\casequestion>\n"
          "And five possible answers:\n"
          "<ans>1- Acute subdural hematoma.<\\ans>\n"
          "<ans>2- Trobocytopenic purpura.<\\ans>\n"
          "<ans>3- Cerebral hemorrhagic contusion.<\\ans>\n"
          "<ans>4- Severe diffuse axonal injury.<\\ans>\n"
          "<ans>5- Acute heart attack.<\\ans>\n"
          "The argument for the correct answer without mentioning the options and focusing exclusively on the "
          "arguments is:\n"
          "Diffuse axonal injury produces an early and sustained deterioration of the level of consciousness (as "
          "mentioned in the case statement) without a lesion on CT scan to justify the picture. Sometimes, "
          "punctate hemorrhages at the level of the corpus callosum, corticosubcortical junction and dorsolateral "
          "portion of the brainstem are evidenced in this imaging test.";
      t.user_text =
          "Given this new case and the question related to it:\n"
          "<casequestion> {case_question} <\\casequestion>\n"
          "And five possible answers:\n"
          "<ans> {ans1} <\\ans>\n"
          "<ans> {ans2} <\\ans>\n"
          "<ans> {ans3} <\\ans>\n"
          "<ans> {ans4} <\\ans>\n"
          "<ans> {ans5} <\\ans>\n"
          "The argument for the correct answer without mentioning the options and focusing exclusively on the "
          "arguments is:";
      break;
    case TaskKind::Misinfo:
      t.system_text =
          "You are a medical student. Given a medical question, you must answer the question and include the "
          "arguments you use to reach your answer.";
      t.exemplar =
          "A question <question> Can taking the enzyme diamino oxidase prevent alcohol-related hangover "
          "symptoms? <\\question>\n"
          "The argument for the correct answer and focusing exclusively on the arguments is:\n"
          "Such an effect is not likely, nor do clinical studies exist on this issue.";
      t.user_text =
          "Given this new question:\n"
          "<question> {question} <\\question>\n"
          "The argument for the correct answer and focusing exclusively on the arguments is:";
      break;
    case TaskKind::ClinicalNli:
      t.system_text =
          "You are a medical student. Given a medical hypothesis and evidences separated by **, extract the "
          "evidences that supports or contradicts the hypothesis without adding any other words. Remember, do "
          "not generate any new text. Extract only the relevant parts exactly as they appear in the given text.";
      t.exemplar =
          std::string(
              "A hypothesis <hypothesis> Patients with significantly elevated ejection fraction are excluded from "
              "the primary trial, but can still be eligible for the secondary trial if they are 55 years of age or "
              "over. <\\hypothesis>\n\n"
              "A list of possible evidences <evidences> ") +
          kNliExemplarEvidences +
          " <\\evidences>\n"
          "The evidences that supports or contradicts the hypothesis without adding any other words are:\n"
          "Cardiac left ventricular function with resting ejection fraction < 50% (below upper limit of normal). "
          "** Premenopausal women 55 years of age or younger with regular menstrual cycles (at least four cycles "
          "in the last six months).";
      t.user_text =
          "Given this new hypothesis:\n"
          "<hypothesis> {statement} <\\hypothesis>\n"
          "And given this new list of possible evidences <evidences> {evidences} <\\evidences>\n"
          "The evidences that supports or contradicts the hypothesis without adding any other words are:";
      break;
  }
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidConfig, "template file must be a JSON object");
  auto task = parse_task(j.value("task", ""));
  if (!task) throw Error(ErrorCode::InvalidConfig, "template task is missing or unknown");
  PromptTemplate t;
  t.task = *task;
  t.system_text = j.value("system_text", "");
  t.exemplar = j.value("exemplar", "");
  t.user_text = j.value("user_text", "");
  t.validate();
  return t;
}

RenderedPrompt build_prompt(const PromptTemplate& tmpl, const ProxyInstance& inst) {
  if (tmpl.task != task_of(inst)) {
    throw Error(ErrorCode::PlaceholderMissing, "template is for a different task than instance " + instance_id(inst));
  }
  const auto values = fill_values(inst);
  static const std::regex ans_re(R"(\{ans[0-9]+\})");
  std::string user;
  for (const auto& line : text::split(tmpl.user_text, "\n")) {
    std::string rendered = line;
    bool drop = false;
    for (const auto& name : placeholders_in(line)) {
      auto it = values.find(name);
      if (it == values.end()) {
        if (std::regex_search(line, ans_re) && name.rfind("ans", 0) == 0) {
          drop = true;
          break;
        }
        throw Error(ErrorCode::PlaceholderMissing, "no value for {" + name + "} in " + instance_id(inst));
      }
      const std::string token = "{" + name + "}";
      for (auto pos = rendered.find(token); pos != std::string::npos; pos = rendered.find(token, pos + it->second.size())) {
        rendered.replace(pos, token.size(), it->second);
      }
    }
    if (drop) continue;
    if (!user.empty()) user += '\n';
    user += rendered;
  }
  return {tmpl.system_text + "\nExample:\n" + tmpl.exemplar, user};
}

json ChatRequest::to_wire() const {
  json body;
  body["model"] = model;
  body["messages"] = json::array({
      {{"role", "system"}, {"content", prompt.system}},
      {{"role", "user"}, {"content", prompt.user}},
  });
  body["max_tokens"] = params.max_new_tokens;
  // Greedy decoding is expressed through the standard fields.
  body["temperature"] = params.sampling ? params.temperature : 0.0;
  body["top_p"] = params.sampling ? params.top_p : 1.0;
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

std::string ChatRequest::fingerprint() const { return text::sha256_hex(to_wire().dump()); }

HttpChatEndpoint::HttpChatEndpoint(http::Endpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (const char* key = std::getenv("PROXYRANK_API_KEY"); key && *key) {
    endpoint_.headers["Authorization"] = std::string("Bearer ") + key;
  }
}

std::string HttpChatEndpoint::complete(const ChatRequest& request) {
  auto res = http::post_json(endpoint_, "/chat", request.to_wire());
  if (res.status == 429) throw Error(ErrorCode::RateLimited, "endpoint kept returning 429");
  if (res.status != 200) {
    throw Error(ErrorCode::EndpointError, "status " + std::to_string(res.status));
  }
  if (!res.body.is_object() || !res.body.contains("content") || !res.body["content"].is_string()) {
    throw Error(ErrorCode::EndpointError, "response has no string 'content'");
  }
  return res.body["content"].get<std::string>();
}

json to_json(const GeneratedArgument& a) {
  json j{{"instance_id", a.instance_id},
         {"provider_id", a.provider_id},
         {"model_name", a.model_name},
         {"text", a.text},
         {"request_fingerprint", a.request_fingerprint}};
  if (!a.batch.empty()) j["batch"] = a.batch;
  if (a.flagged) {
    j["flagged"] = true;
    j["unverified_segments"] = a.unverified_segments;
  }
  return j;
}

GeneratedArgument generated_from_json(const json& j) {
  GeneratedArgument a;
  a.instance_id = j.at("instance_id").get<std::string>();
  a.provider_id = j.at("provider_id").get<std::string>();
  a.model_name = j.value("model_name", "");
  a.text = j.at("text").get<std::string>();
  a.request_fingerprint = j.value("request_fingerprint", "");
  a.created_at = j.value("created_at", "");
  a.batch = j.value("batch", "");
  a.flagged = j.value("flagged", false);
  if (j.contains("unverified_segments")) a.unverified_segments = j["unverified_segments"].get<std::vector<std::string>>();
  return a;
}

std::vector<GeneratedArgument> read_generated(const std::filesystem::path& path) {
  std::vector<GeneratedArgument> out;
  for (const auto& j : read_jsonl(path)) out.push_back(generated_from_json(j));
  return out;
}

std::vector<std::string> unverified_segments(const std::string& extraction, const std::string& source) {
  std::vector<std::string> out;
  for (const auto& part : text::split(extraction, "**")) {
    auto seg = text::trim(part);
    if (seg.empty()) continue;
    if (source.find(seg) != std::string::npos) continue;
    // Models often close a fragment with a period the source lacks.
    auto stripped = seg;
    while (!stripped.empty() && stripped.back() == '.') stripped.pop_back();
    if (!stripped.empty() && source.find(stripped) != std::string::npos) continue;
    out.push_back(seg);
  }
  return out;
}

GenerationResult generate(std::span<const ProxyInstance> instances, const PromptTemplate& tmpl,
                          const GenerationParams& params, std::span<const Provider> providers,
                          const GenerationOptions& options) {
  params.validate();
  tmpl.validate();
  if (options.output.empty()) throw Error(ErrorCode::InvalidConfig, "generation needs an output path");

  const auto journal = std::filesystem::path(options.output.string() + ".partial");
  const auto failed_path = std::filesystem::path(options.output.string() + ".failed.jsonl");
  const auto meta_path = std::filesystem::path(options.output.string() + ".meta.jsonl");

  std::map<PairKey, GeneratedArgument> done;
  if (options.resume) {
    std::map<PairKey, std::string> stamps;
    for (const auto& j : read_jsonl(meta_path)) {
      stamps[{j.value("instance_id", ""), j.value("provider_id", "")}] = j.value("created_at", "");
    }
    for (const auto* path : {&options.output, &journal}) {
      for (const auto& j : read_jsonl(*path)) {
        auto a = generated_from_json(j);
        if (a.created_at.empty()) a.created_at = stamps[{a.instance_id, a.provider_id}];
        done[{a.instance_id, a.provider_id}] = std::move(a);
      }
    }
  } else {
    std::filesystem::remove(journal);
  }

  struct Job {
    const ProxyInstance* inst;
    const Provider* provider;
  };
  std::vector<Job> jobs;
  for (const auto& inst : instances) {
    for (const auto& p : providers) {
      if (!done.count({instance_id(inst), p.provider_id})) jobs.push_back({&inst, &p});
    }
  }

  std::mutex mu;
  std::vector<GenerationFailure> failures;
  std::exception_ptr fatal;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto run_job = [&](const Job& job) {
    ChatRequest req{job.provider->model_name, build_prompt(tmpl, *job.inst), params};
    const auto& iid = instance_id(*job.inst);
    std::string content;
    for (int attempt = 0;; ++attempt) {
      try {
        content = job.provider->endpoint->complete(req);
        break;
      } catch (const Error& e) {
        const bool transient = e.code() == ErrorCode::RateLimited || e.code() == ErrorCode::BackendUnavailable;
        if (transient && attempt < options.max_retries) {
          if (options.backoff_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options.backoff_ms * (attempt + 1)));
          continue;
        }
        std::lock_guard lock(mu);
        failures.push_back({iid, job.provider->provider_id, std::string(to_string(e.code())), e.what()});
        return;
      }
    }
    if (text::trim(content).empty()) {
      std::lock_guard lock(mu);
      failures.push_back({iid, job.provider->provider_id, std::string(to_string(ErrorCode::EmptyCompletion)),
                          "endpoint returned an empty completion"});
      return;
    }
    GeneratedArgument a;
    a.instance_id = iid;
    a.provider_id = job.provider->provider_id;
    a.model_name = job.provider->model_name;
    a.text = content;
    a.request_fingerprint = req.fingerprint();
    a.created_at = now_iso8601();
    a.batch = options.batch_id;
    if (const auto* nli = std::get_if<NliInstance>(job.inst)) {
      a.unverified_segments = unverified_segments(content, nli->full_section);
      a.flagged = !a.unverified_segments.empty();
    }
    std::lock_guard lock(mu);
    auto j = to_json(a);
    j["created_at"] = a.created_at;
    append_line(journal, j);
    done[{a.instance_id, a.provider_id}] = std::move(a);
  };

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        run_job(jobs[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        abort.store(true);
      }
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(std::max<std::size_t>(1, options.max_in_flight), jobs.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  GenerationResult result;
  for (auto& [key, a] : done) result.records.push_back(a);
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.instance_id, a.provider_id) < std::tie(b.instance_id, b.provider_id);
  });
  result.failed = failures;

  const auto tmp = std::filesystem::path(options.output.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    std::ofstream meta(meta_path, std::ios::binary | std::ios::trunc);
    for (const auto& a : result.records) {
      out << to_json(a).dump() << '\n';
      meta << json{{"instance_id", a.instance_id}, {"provider_id", a.provider_id}, {"created_at", a.created_at}}.dump()
           << '\n';
    }
  }
  std::filesystem::rename(tmp, options.output);
  {
    std::ofstream out(failed_path, std::ios::binary | std::ios::trunc);
    for (const auto& f : result.failed) {
      out << json{{"instance_id", f.instance_id}, {"provider_id", f.provider_id}, {"code", f.code}, {"message", f.message}}
                 .dump()
          << '\n';
    }
  }
  std::filesystem::remove(journal);
  return result;
}

}  // namespace proxyrank::gen
