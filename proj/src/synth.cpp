#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "dacl/text.hpp"

namespace dacl {

namespace {

const std::vector<std::string> kPositive = {
    "brilliant", "wonderful", "superb",   "delightful", "moving",    "charming",  "excellent", "masterful",
    "gripping",  "touching",  "stunning", "hilarious",  "beautiful", "engaging",  "clever",    "memorable",
    "terrific",  "inspired",  "joyful",   "heartfelt",  "radiant",   "rewarding", "fresh",     "captivating"};

const std::vector<std::string> kNegative = {
    "dreadful", "boring",   "awful",  "clumsy",    "tedious",   "bland",     "painful",  "terrible",
    "lifeless", "annoying", "sloppy", "forgettable", "dull",    "pointless", "wooden",   "mediocre",
    "messy",    "shallow",  "stale",  "irritating", "lazy",     "hollow",    "tiresome", "disappointing"};

const std::vector<std::string> kFiller = {
    "the",       "movie",    "film",     "plot",       "story",      "actor",     "actress",  "director",
    "scene",     "scenes",   "script",   "camera",     "music",      "score",     "cast",     "ending",
    "opening",   "character", "characters", "dialogue", "pacing",    "sequence",  "studio",   "sequel",
    "was",       "is",       "were",     "felt",       "seemed",     "looked",    "had",      "has",
    "a",         "an",       "this",     "that",       "these",      "its",       "their",    "his",
    "her",       "in",       "on",       "with",       "about",      "through",   "during",   "after",
    "before",    "and",      "but",      "while",      "because",    "although",  "so",       "then",
    "really",    "quite",    "rather",   "somewhat",   "mostly",     "often",     "again",    "still",
    "first",     "second",   "final",    "whole",      "entire",     "middle",    "last",     "long",
    "theater",   "audience", "friends",  "night",      "weekend",    "screen",    "minutes",  "hours",
    "i",         "we",       "you",      "they",       "watched",    "saw",       "remember", "think"};

std::string pick(const std::vector<std::string>& words, std::mt19937_64& rng) {
    return words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
}

// One review: sentences of filler with sentiment cues. The first sentence always
// carries an agreeing cue and opposing cues only appear while agreeing ones lead by
// 2, so every prefix (and so every truncation) keeps a majority for the label.
std::string make_review(int label, std::size_t target_words, std::mt19937_64& rng) {
    const auto& agree = label == 1 ? kPositive : kNegative;
    const auto& oppose = label == 1 ? kNegative : kPositive;
    std::uniform_int_distribution<std::size_t> sentence_len(6, 13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::string text;
    std::size_t words = 0;
    int balance = 0;  // agreeing minus opposing cues so far
    while (words < target_words) {
        std::size_t len = std::min(sentence_len(rng), target_words - words);
        if (len == 0) break;
        std::vector<std::string> sentence;
        for (std::size_t i = 0; i < len; ++i) sentence.push_back(pick(kFiller, rng));
        if (words == 0 || unit(rng) < 0.67) {
            const bool opposing = balance >= 2 && unit(rng) < 0.3;
            auto slot = std::uniform_int_distribution<std::size_t>(0, len - 1)(rng);
            sentence[slot] = opposing ? pick(oppose, rng) : pick(agree, rng);
            balance += opposing ? -1 : 1;
        }
        sentence[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0][0])));
        for (std::size_t i = 0; i < sentence.size(); ++i) {
            if (!text.empty()) text += ' ';
            text += sentence[i];
        }
        text += unit(rng) < 0.15 ? "!" : ".";
        words += len;
    }
    return text;
}

}  // namespace

std::vector<Example> synthesize_corpus(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % 2);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Example> out;
    out.reserve(count);
    for (int label : labels) {
        const double u = unit(rng);
        std::size_t target = 0;
        if (u < 0.70) {
            target = std::uniform_int_distribution<std::size_t>(12, 90)(rng);
        } else if (u < 0.92) {
            target = std::uniform_int_distribution<std::size_t>(100, 260)(rng);
        } else {
            target = std::uniform_int_distribution<std::size_t>(305, 380)(rng);
        }
        out.push_back(make_example(make_review(label, target, rng), label));
    }
    return out;
}

}  // namespace dacl
