#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>

#include "proxyrank/corpus.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::corpus {

namespace {

constexpr auto kIcase = std::regex::ECMAScript | std::regex::icase;

std::string gerund(const std::string& verb) {
  static const std::map<std::string, std::string> kIrregular = {
      {"stop", "stopping"},     {"admit", "admitting"},   {"refer", "referring"},
      {"transfer", "transferring"}, {"plan", "planning"}, {"drop", "dropping"},
      {"omit", "omitting"},     {"submit", "submitting"}, {"permit", "permitting"},
      {"begin", "beginning"},   {"get", "getting"},       {"put", "putting"},
      {"run", "running"},       {"set", "setting"},       {"cut", "cutting"},
      {"be", "being"},          {"see", "seeing"},        {"lie", "lying"},
      {"die", "dying"},         {"tie", "tying"},
  };
  if (auto it = kIrregular.find(verb); it != kIrregular.end()) return it->second;
  const auto n = verb.size();
  if (n > 2 && verb[n - 1] == 'e' && verb[n - 2] != 'e' && verb[n - 2] != 'y' && verb[n - 2] != 'o') {
    return verb.substr(0, n - 1) + "ing";
  }
  return verb + "ing";
}

bool is_capitalized_word(std::string_view w) {
  if (w.size() < 2 && !(w.size() == 1 && w[0] == 'A')) return false;
  if (!std::isupper(static_cast<unsigned char>(w[0]))) return false;
  return std::none_of(w.begin() + 1, w.end(),
                      [](char c) { return std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)); });
}

// Option text as it reads mid-sentence: trailing period removed, imperative
// verbs turned into gerunds, sentence-case first word lowered.
std::string render_option(const std::string& option, const std::set<std::string>& verbs) {
  std::string s = text::trim(option);
  while (!s.empty() && s.back() == '.') s.pop_back();
  s = text::trim(s);
  const auto space = s.find(' ');
  std::string first = s.substr(0, space);
  const std::string rest = space == std::string::npos ? std::string() : s.substr(space);
  const std::string lower = text::to_lower(first);
  if (verbs.count(lower)) {
    first = gerund(lower);
  } else if (is_capitalized_word(first)) {
    first[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(first[0])));
  }
  return first + rest;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Replaces every match of `re` using `fn`; fn returns nullopt to keep the
// match as is.
template <typename Fn>
std::string replace_each(const std::string& input, const std::regex& re, Fn fn) {
  std::string out;
  auto last = input.cbegin();
  for (std::sregex_iterator it(input.begin(), input.end(), re), end; it != end; ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    if (auto rep = fn(m)) out.append(*rep);
    else out.append(m[0].first, m[0].second);
    last = m[0].second;
  }
  out.append(last, input.cend());
  return out;
}

std::vector<std::string> split_sentences(const std::string& s) {
  // A boundary is sentence punctuation, whitespace, then an uppercase letter
  // or digit. "e.g. carcinoid" stays in one piece.
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '.' && s[i] != '!' && s[i] != '?') continue;
    std::size_t j = i + 1;
    while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j == i + 1 || j >= s.size()) continue;
    const auto next = static_cast<unsigned char>(s[j]);
    if (std::isupper(next) || std::isdigit(next)) {
      out.push_back(s.substr(start, j - start));
      start = j;
    }
  }
  if (start < s.size()) out.push_back(s.substr(start));
  return out;
}

bool is_sentence_start(const std::string& s, std::size_t pos) {
  std::size_t i = pos;
  while (i > 0 && std::isspace(static_cast<unsigned char>(s[i - 1]))) --i;
  return i == 0 || s[i - 1] == '.' || s[i - 1] == '!' || s[i - 1] == '?';
}

std::string neutral_noun(const std::string& text, std::size_t noun_pos, const std::string& noun,
                         std::string_view question) {
  if (question.empty()) return noun;
  // Word immediately preceding the noun ("appropriate" in "most appropriate answer").
  std::size_t e = noun_pos;
  while (e > 0 && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::size_t b = e;
  while (b > 0 && std::isalpha(static_cast<unsigned char>(text[b - 1]))) --b;
  if (b == e) return noun;
  const std::string adjective = text.substr(b, e - b);
  const std::regex re("\\b" + adjective + "\\s+([A-Za-z]+)", kIcase);
  std::smatch m;
  const std::string q(question);
  static const std::set<std::string> kSkip = {"answer", "answers", "option", "options",
                                              "choice", "choices", "of", "to", "for", "in"};
  if (std::regex_search(q, m, re)) {
    auto candidate = text::to_lower(m[1].str());
    if (!kSkip.count(candidate)) return candidate;
  }
  return noun;
}

}  // namespace

NeutralizationConfig NeutralizationConfig::defaults() {
  NeutralizationConfig cfg;
  cfg.identification_patterns = {
      R"(\b(correct|right|true)\s+(answer|option|choice)\s+(is|would be|seems to be)\b)",
      R"(\b(answer|option|choice)\s+(number\s+)?[0-9]\s+is\s+(the\s+)?(correct|right|true)\b)",
      R"(\b(i|we)\s+(would\s+)?(mark|choose|select|pick)\b)",
  };
  cfg.imperative_verbs = {
      "add",        "administer", "admit",      "advise",     "apply",     "ask",
      "assess",     "avoid",      "begin",      "biopsy",     "calculate", "carry",
      "change",     "check",      "confirm",    "consider",   "continue",  "decrease",
      "determine",  "discontinue", "do",        "drain",      "evaluate",  "excise",
      "explain",    "follow",     "give",       "hospitalize", "increase", "indicate",
      "inform",     "initiate",   "inject",     "insert",     "intubate",  "investigate",
      "keep",       "leave",      "maintain",   "make",       "measure",   "monitor",
      "observe",    "obtain",     "operate",    "order",      "perform",   "place",
      "prescribe",  "provide",    "reassure",   "recommend",  "reduce",    "refer",
      "remove",     "repeat",     "replace",    "request",    "resect",    "restrict",
      "schedule",   "search",     "send",       "start",      "stop",      "suspend",
      "switch",     "take",       "test",       "transfuse",  "treat",     "trial",
      "try",        "use",        "vaccinate",  "wait",       "watch",     "withdraw",
  };
  return cfg;
}

NeutralizedText neutralize_explanation(std::string_view input, std::span<const std::string> options,
                                       std::size_t /*correct_index*/,
                                       const NeutralizationConfig& config,
                                       std::string_view question) {
  NeutralizedText result;
  const std::size_t k = options.size();
  const std::set<std::string> verbs(config.imperative_verbs.begin(), config.imperative_verbs.end());
  auto option_for = [&](const std::string& digit) -> std::optional<std::size_t> {
    const int n = std::stoi(digit);
    if (n < 1 || static_cast<std::size_t>(n) > k) return std::nullopt;
    return static_cast<std::size_t>(n - 1);
  };

  // 1. Drop sentences that name the correct answer outright.
  std::string s(input);
  {
    std::vector<std::regex> patterns;
    for (const auto& p : config.identification_patterns) patterns.emplace_back(p, kIcase);
    bool dropped = false;
    std::string kept;
    for (const auto& sentence : split_sentences(s)) {
      const bool identifies = std::any_of(patterns.begin(), patterns.end(), [&](const std::regex& re) {
        return std::regex_search(sentence, re);
      });
      if (identifies) dropped = true;
      else kept += sentence;
    }
    if (dropped) s = text::trim(kept);
  }

  // 2. Deferred references: "the most appropriate answer seems to be 2".
  {
    static const std::regex re(
        R"(\b(answer|option|choice)\b((?:\s+(?!answer\b|option\b|choice\b)[A-Za-z]+){0,3}?)\s+(is|be|was)\s+(?:number\s+)?([1-9])\b)",
        kIcase);
    s = replace_each(s, re, [&](const std::smatch& m) -> std::optional<std::string> {
      auto idx = option_for(m[4].str());
      if (!idx) return std::nullopt;
      const auto pos = static_cast<std::size_t>(m.position(0));
      std::string noun = neutral_noun(s, pos, m[1].str(), question);
      if (text::starts_with_upper(m[1].str())) noun = capitalize(noun);
      return noun + m[2].str() + " " + m[3].str() + " " + render_option(options[*idx], verbs);
    });
  }

  // 3. Explicit lists: "Answers 1, 2 and 5", "option 3".
  {
    static const std::regex re(
        R"(\b(answers?|options?|choices?)\s+([1-9])((?:\s*,\s*[1-9])*)(?:\s*,?\s+(and|or)\s+([1-9]))?\b)",
        kIcase);
    static const std::regex digit_re("[1-9]");
    s = replace_each(s, re, [&](const std::smatch& m) -> std::optional<std::string> {
      std::vector<std::string> digits{m[2].str()};
      const std::string middle = m[3].str();
      for (std::sregex_iterator it(middle.begin(), middle.end(), digit_re), end; it != end; ++it) {
        digits.push_back(it->str());
      }
      if (m[5].matched) digits.push_back(m[5].str());
      std::vector<std::string> phrases;
      for (const auto& d : digits) {
        auto idx = option_for(d);
        if (!idx) return std::nullopt;
        phrases.push_back(render_option(options[*idx], verbs));
      }
      std::string joined;
      for (std::size_t i = 0; i < phrases.size(); ++i) {
        if (i > 0) joined += (i + 1 == phrases.size()) ? " " + (m[4].matched ? m[4].str() : std::string("and")) + " " : ", ";
        joined += phrases[i];
      }
      if (text::starts_with_upper(m[1].str())) joined = capitalize(joined);
      return joined;
    });
  }

  // 4. Enumerated markers: "2- ..." at a token start.
  {
    static const std::regex re(R"((^|[\s(\[])([1-9])-(?=\s|[A-Za-z]))");
    s = replace_each(s, re, [&](const std::smatch& m) -> std::optional<std::string> {
      auto idx = option_for(m[2].str());
      if (!idx) return std::nullopt;
      std::string phrase = render_option(options[*idx], verbs);
      const auto pos = static_cast<std::size_t>(m.position(2));
      if (is_sentence_start(s, pos)) phrase = capitalize(phrase);
      return m[1].str() + phrase + ":";
    });
  }

  // 5. Anything still pairing an option word with an in-range digit.
  {
    static const std::regex re(
        R"(\b(?:answers?|options?|choices?)\W{0,3}([1-9])\b|\b([1-9])\W{0,3}(?:answers?|options?|choices?)\b)",
        kIcase);
    for (std::sregex_iterator it(s.begin(), s.end(), re), end; it != end; ++it) {
      const auto& m = *it;
      const std::string digit = m[1].matched ? m[1].str() : m[2].str();
      if (option_for(digit)) result.unresolved.push_back(m.str());
    }
  }

  result.text = std::move(s);
  return result;
}

NeutralizedText neutralize_instance(const MmcqaInstance& inst, const NeutralizationConfig& config) {
  if (auto it = config.overrides.find(inst.id); it != config.overrides.end()) {
    return {it->second, {}};
  }
  return neutralize_explanation(inst.gold_explanation, inst.options, inst.correct_index, config,
                                inst.question);
}

}  // namespace proxyrank::corpus
