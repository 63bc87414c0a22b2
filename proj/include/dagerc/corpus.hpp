#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dagerc {

struct Utterance {
  int index = 0;
  std::string speaker;
  std::vector<std::string> tokens;
  std::optional<int> label;                     // index into Corpus::label_set
  std::optional<std::vector<double>> feature;   // dense vector of d_feat entries

  bool operator==(const Utterance&) const = default;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;

  int size() const { return static_cast<int>(utterances.size()); }
  bool operator==(const Conversation&) const = default;
};

// A validated set of conversations sharing one label set and speaker universe.
// Immutable after construction; safe to share across threads.
struct Corpus {
  std::vector<Conversation> conversations;
  std::vector<std::string> label_set;
  std::set<std::string> speaker_set;
  std::optional<int> neutral_index;
  std::optional<int> d_feat;

  int total_utterances() const {
    int n = 0;
    for (const auto& c : conversations) n += c.size();
    return n;
  }
  bool operator==(const Corpus&) const = default;
};

// Line-delimited text records, one conversation per line:
//   {"id": str, "utterances": [{"speaker": str?, "text": str?, "label": str?,
//                               "feature": [float]?}]}
// optionally preceded by a header line {"labels": [str], "neutral": str?}.
// Utterances without a speaker get synthesized alternating speakers A/B.
// Malformed input raises std::runtime_error naming the offending line.
Corpus load_corpus(const std::string& path, std::optional<int> expected_d_feat = std::nullopt);

// Inverse of load_corpus: emits a header line plus one line per conversation.
void save_corpus(const Corpus& corpus, const std::string& path);

// Deterministic signed bucket-count vector over the utterance tokens, scaled
// by 1/sqrt(n_tokens). Bucket and sign come from two FNV-1a hashes of the
// token mixed with the salt.
std::vector<double> hash_featurize(const Utterance& utterance, int d_feat, std::uint64_t salt);

// Fills every utterance feature from its tokens; sets corpus.d_feat.
void featurize_corpus(Corpus& corpus, int d_feat, std::uint64_t salt);

// Last n_val conversations become the validation corpus, the rest train.
std::pair<Corpus, Corpus> split_tail(const Corpus& corpus, int n_val);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed);

}  // namespace dagerc
