#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dacl {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr std::size_t kNumSpecials = 4;

/// Word vocabulary. Ids 0..3 are always [PAD], [UNK], [CLS], [SEP].
class Vocab {
   public:
    Vocab();

    static Vocab load(const std::filesystem::path& path);
    static Vocab parse(std::istream& in, const std::string& source);
    void save(const std::filesystem::path& path) const;
    // One token per line; line number is the id.
    std::string serialize() const;

    int id(std::string_view token) const;  // kUnkId when absent
    const std::string& token(int id) const;
    bool contains(std::string_view token) const;
    std::size_t size() const { return tokens_.size(); }
    void append(std::string token);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct Example {
    std::string text;
    int label = 0;
    std::size_t word_count = 0;  // whitespace-delimited words of the raw text
};

std::size_t count_words(std::string_view text);
Example make_example(std::string text, int label);

/// Lowercases, splits on whitespace, and emits every ASCII punctuation mark as its
/// own token.
std::vector<std::string> split_tokens(std::string_view text);

/// Tokens with frequency >= min_freq, most frequent first (ties lexicographic), after
/// the specials, so that the vocabulary holds at most max_size entries (0 = no cap).
Vocab build_vocab(std::span<const Example> corpus, std::size_t min_freq, std::size_t max_size);

struct Encoded {
    std::vector<int> ids;
    std::vector<int> segment_ids;
    std::vector<int> mask;
};

/// [CLS] body [SEP] padded with [PAD] to max_len; the body is truncated to max_len - 2.
Encoded tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len);

std::vector<Example> load_jsonl(const std::filesystem::path& path);
std::vector<Example> parse_jsonl(std::istream& in, const std::string& source);
void save_jsonl(const std::filesystem::path& path, std::span<const Example> examples);

/// Row-major [size x seq_len] id matrices. seq_len is the longest row of the batch
/// (at most max_len); trailing all-pad columns are not stored.
struct Batch {
    std::size_t size = 0;
    std::size_t seq_len = 0;
    std::vector<int> token_ids;
    std::vector<int> segment_ids;
    std::vector<int> attention_mask;
    std::vector<int> labels;
    std::vector<std::size_t> word_counts;
};

Batch make_batch(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len);

/// Splits into batches of batch_size (the last may be short). With a seed the order
/// is shuffled reproducibly; without one the input order is kept.
std::vector<Batch> make_batches(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len,
                                std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed);

enum class LengthGroup { Short, Medium, Long };
inline constexpr LengthGroup kLengthGroups[] = {LengthGroup::Short, LengthGroup::Medium, LengthGroup::Long};

/// Short < 100 words, Medium 100..300 inclusive, Long > 300.
LengthGroup length_group(std::size_t word_count);
std::string_view to_string(LengthGroup group);

struct DataSplits {
    std::vector<Example> train;
    std::vector<Example> val;
    std::vector<Example> test;
};

/// Seeded shuffle, then val/test fractions carved off the front.
DataSplits split_dataset(std::span<const Example> examples, double val_fraction, double test_fraction,
                         std::uint64_t seed);

/// Seeded lexicon-driven sentiment corpus with balanced labels and a mix of short,
/// medium and long reviews.
std::vector<Example> synthesize_corpus(std::size_t count, std::uint64_t seed);

}  // namespace dacl
