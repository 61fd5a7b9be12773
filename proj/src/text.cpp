#include "dacl/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dacl/errors.hpp"
#include "json.hpp"

namespace dacl {

namespace {

const char* const kSpecialTokens[kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

Vocab::Vocab() {
    for (const char* s : kSpecialTokens) append(s);
}

void Vocab::append(std::string token) {
    if (ids_.count(token)) throw DataError("duplicate vocabulary token '" + token + "'");
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

int Vocab::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

std::string Vocab::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path.string());
    out << serialize();
}

Vocab Vocab::parse(std::istream& in, const std::string& source) {
    Vocab vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no <= kNumSpecials) {
            if (line != kSpecialTokens[line_no - 1]) {
                throw DataError(source + ":" + std::to_string(line_no) + ": expected special token " +
                                kSpecialTokens[line_no - 1]);
            }
            continue;
        }
        if (line.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty token");
        try {
            vocab.append(line);
        } catch (const DataError& e) {
            throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (line_no < kNumSpecials) throw DataError(source + ": truncated vocabulary (missing special tokens)");
    return vocab;
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    return parse(in, path.string());
}

std::size_t count_words(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

Example make_example(std::string text, int label) {
    Example ex;
    ex.word_count = count_words(text);
    ex.text = std::move(text);
    ex.label = label;
    return ex;
}

std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
    };
    for (char c : text) {
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    flush();
    return tokens;
}

Vocab build_vocab(std::span<const Example> corpus, std::size_t min_freq, std::size_t max_size) {
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& ex : corpus) {
        for (auto& t : split_tokens(ex.text)) ++freq[std::move(t)];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : freq) {
        if (n >= min_freq) ranked.emplace_back(tok, n);
    }
    // std::map iteration is already lexicographic; stable sort keeps that for ties.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab vocab;
    for (auto& [tok, n] : ranked) {
        if (max_size != 0 && vocab.size() >= max_size) break;
        vocab.append(tok);
    }
    return vocab;
}

Encoded tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 2) throw ConfigError("max_len must be at least 2 to hold [CLS] and [SEP]");
    auto words = split_tokens(text);
    const std::size_t body = std::min(words.size(), max_len - 2);
    Encoded enc;
    enc.ids.assign(max_len, kPadId);
    enc.segment_ids.assign(max_len, 0);
    enc.mask.assign(max_len, 0);
    enc.ids[0] = kClsId;
    for (std::size_t i = 0; i < body; ++i) enc.ids[i + 1] = vocab.id(words[i]);
    enc.ids[body + 1] = kSepId;
    std::fill_n(enc.mask.begin(), body + 2, 1);
    return enc;
}

std::vector<Example> parse_jsonl(std::istream& in, const std::string& source) {
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), is_space)) continue;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + "malformed JSON (" + e.what() + ")");
        }
        if (!row.is_object()) throw DataError(where + "row is not a JSON object");
        if (!row.contains("text") || !row["text"].is_string()) throw DataError(where + "missing string field \"text\"");
        if (!row.contains("label")) throw DataError(where + "missing field \"label\"");
        const auto& label = row["label"];
        if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1)) {
            throw DataError(where + "label must be 0 or 1, got " + label.dump());
        }
        out.push_back(make_example(row["text"].get<std::string>(), label.get<int>()));
    }
    return out;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file " + path.string());
    return parse_jsonl(in, path.string());
}

void save_jsonl(const std::filesystem::path& path, std::span<const Example> examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file " + path.string());
    for (const auto& ex : examples) {
        nlohmann::json row = {{"text", ex.text}, {"label", ex.label}};
        out << row.dump() << '\n';
    }
}

Batch make_batch(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len) {
    Batch b;
    b.size = examples.size();
    std::vector<Encoded> rows;
    rows.reserve(examples.size());
    for (const auto& ex : examples) {
        rows.push_back(tokenize(ex.text, vocab, max_len));
        const auto live = static_cast<std::size_t>(std::count(rows.back().mask.begin(), rows.back().mask.end(), 1));
        b.seq_len = std::max(b.seq_len, live);
        b.labels.push_back(ex.label);
        b.word_counts.push_back(ex.word_count);
    }
    for (const auto& r : rows) {
        b.token_ids.insert(b.token_ids.end(), r.ids.begin(), r.ids.begin() + b.seq_len);
        b.segment_ids.insert(b.segment_ids.end(), r.segment_ids.begin(), r.segment_ids.begin() + b.seq_len);
        b.attention_mask.insert(b.attention_mask.end(), r.mask.begin(), r.mask.begin() + b.seq_len);
    }
    return b;
}

std::vector<Batch> make_batches(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len,
                                std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_seed) {
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<Example> chunk;
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
            chunk.push_back(examples[order[i]]);
        }
        batches.push_back(make_batch(chunk, vocab, max_len));
    }
    return batches;
}

LengthGroup length_group(std::size_t word_count) {
    if (word_count < 100) return LengthGroup::Short;
    if (word_count <= 300) return LengthGroup::Medium;
    return LengthGroup::Long;
}

std::string_view to_string(LengthGroup group) {
    switch (group) {
        case LengthGroup::Short: return "short";
        case LengthGroup::Medium: return "medium";
        case LengthGroup::Long: return "long";
    }
    return "?";
}

DataSplits split_dataset(std::span<const Example> examples, double val_fraction, double test_fraction,
                         std::uint64_t seed) {
    if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1.0) {
        throw ConfigError("val/test fractions must be non-negative and sum to less than 1");
    }
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(examples.size());
    const auto n_val = static_cast<std::size_t>(std::llround(n * val_fraction));
    const auto n_test = static_cast<std::size_t>(std::llround(n * test_fraction));
    DataSplits s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& ex = examples[order[i]];
        if (i < n_val) {
            s.val.push_back(ex);
        } else if (i < n_val + n_test) {
            s.test.push_back(ex);
        } else {
            s.train.push_back(ex);
        }
    }
    return s;
}

}  // namespace dacl
