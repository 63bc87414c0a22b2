#include "dagerc/corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace dagerc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, int line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Corpus load_corpus(const std::string& path, std::optional<int> expected_d_feat) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);

  Corpus corpus;
  corpus.d_feat = expected_d_feat;
  std::optional<std::string> neutral_name;
  bool labels_declared = false;
  std::unordered_map<std::string, int> label_index;

  auto intern_label = [&](const std::string& name, int line_no) -> int {
    auto it = label_index.find(name);
    if (it != label_index.end()) return it->second;
    if (labels_declared) fail(path, line_no, "label '" + name + "' not in declared label set");
    const int idx = static_cast<int>(corpus.label_set.size());
    corpus.label_set.push_back(name);
    label_index[name] = idx;
    return idx;
  };

  std::string line;
  int line_no = 0;
  bool first_record = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(path, line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) fail(path, line_no, "record is not an object");

    if (first_record && rec.contains("labels")) {
      first_record = false;
      labels_declared = true;
      for (const auto& name : rec.at("labels")) {
        const std::string s = name.get<std::string>();
        if (label_index.count(s)) fail(path, line_no, "duplicate label '" + s + "' in header");
        label_index[s] = static_cast<int>(corpus.label_set.size());
        corpus.label_set.push_back(s);
      }
      if (rec.contains("neutral") && !rec.at("neutral").is_null())
        neutral_name = rec.at("neutral").get<std::string>();
      continue;
    }
    first_record = false;

    Conversation conv;
    if (!rec.contains("id") || !rec.contains("utterances"))
      fail(path, line_no, "conversation record needs 'id' and 'utterances'");
    conv.id = rec.at("id").get<std::string>();
    const json& utts = rec.at("utterances");
    if (!utts.is_array() || utts.empty()) fail(path, line_no, "conversation has no utterances");

    for (std::size_t i = 0; i < utts.size(); ++i) {
      const json& u = utts[i];
      Utterance utt;
      utt.index = static_cast<int>(i);
      if (u.contains("speaker") && !u.at("speaker").is_null())
        utt.speaker = u.at("speaker").get<std::string>();
      else
        utt.speaker = (i % 2 == 0) ? "A" : "B";  // turn-as-speaker fallback
      if (u.contains("text") && !u.at("text").is_null())
        utt.tokens = split_tokens(u.at("text").get<std::string>());
      if (u.contains("label") && !u.at("label").is_null())
        utt.label = intern_label(u.at("label").get<std::string>(), line_no);
      if (u.contains("feature") && !u.at("feature").is_null()) {
        std::vector<double> feat = u.at("feature").get<std::vector<double>>();
        for (double v : feat)
          if (!std::isfinite(v)) fail(path, line_no, "non-finite feature entry");
        if (!corpus.d_feat)
          corpus.d_feat = static_cast<int>(feat.size());
        else if (static_cast<int>(feat.size()) != *corpus.d_feat)
          fail(path, line_no,
               "feature length " + std::to_string(feat.size()) + " does not match d_feat " +
                   std::to_string(*corpus.d_feat));
        utt.feature = std::move(feat);
      }
      corpus.speaker_set.insert(utt.speaker);
      conv.utterances.push_back(std::move(utt));
    }
    corpus.conversations.push_back(std::move(conv));
  }

  if (neutral_name) {
    auto it = label_index.find(*neutral_name);
    if (it == label_index.end())
      throw std::runtime_error(path + ": neutral label '" + *neutral_name +
                               "' not in declared label set");
    corpus.neutral_index = it->second;
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);

  json header;
  header["labels"] = corpus.label_set;
  if (corpus.neutral_index) header["neutral"] = corpus.label_set[*corpus.neutral_index];
  out << header.dump() << '\n';

  for (const Conversation& conv : corpus.conversations) {
    json rec;
    rec["id"] = conv.id;
    json utts = json::array();
    for (const Utterance& u : conv.utterances) {
      json ju;
      ju["speaker"] = u.speaker;
      if (!u.tokens.empty()) ju["text"] = join_tokens(u.tokens);
      if (u.label) ju["label"] = corpus.label_set[*u.label];
      if (u.feature) ju["feature"] = *u.feature;
      utts.push_back(std::move(ju));
    }
    rec["utterances"] = std::move(utts);
    out << rec.dump() << '\n';
  }
}

std::vector<double> hash_featurize(const Utterance& utterance, int d_feat, std::uint64_t salt) {
  if (utterance.tokens.empty())
    throw std::invalid_argument("hash_featurize: utterance has no tokens");
  if (d_feat < 1) throw std::invalid_argument("hash_featurize: d_feat must be positive");

  std::vector<double> v(d_feat, 0.0);
  for (const std::string& tok : utterance.tokens) {
    const int bucket = static_cast<int>(fnv1a64(tok, salt) % static_cast<std::uint64_t>(d_feat));
    const bool positive = (fnv1a64(tok, salt ^ 0x9e3779b97f4a7c15ull) & 1) != 0;
    v[bucket] += positive ? 1.0 : -1.0;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(utterance.tokens.size()));
  for (double& x : v) x *= scale;
  return v;
}

void featurize_corpus(Corpus& corpus, int d_feat, std::uint64_t salt) {
  for (Conversation& conv : corpus.conversations)
    for (Utterance& u : conv.utterances) u.feature = hash_featurize(u, d_feat, salt);
  corpus.d_feat = d_feat;
}

std::pair<Corpus, Corpus> split_tail(const Corpus& corpus, int n_val) {
  const int n = static_cast<int>(corpus.conversations.size());
  if (n_val < 1) throw std::invalid_argument("split_tail: n_val must be positive");
  if (n_val >= n)
    throw std::invalid_argument("split_tail: n_val " + std::to_string(n_val) +
                                " must be less than the conversation count " + std::to_string(n));

  Corpus train = corpus, val = corpus;
  train.conversations.assign(corpus.conversations.begin(), corpus.conversations.end() - n_val);
  val.conversations.assign(corpus.conversations.end() - n_val, corpus.conversations.end());
  return {std::move(train), std::move(val)};
}

}  // namespace dagerc
