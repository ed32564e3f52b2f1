#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdlab {

// Character-level symbol table with four specials.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kMask = 1;
    static constexpr int kEos = 2;
    static constexpr int kBos = 3;

    Vocab();

    int size() const { return static_cast<int>(symbols_.size()); }
    // Throws on characters outside the alphabet.
    std::vector<int> encode(std::string_view text) const;
    // Specials render as <PAD>, <MASK>, <EOS>, <BOS>.
    std::string decode(std::span<const int> ids) const;
    // Text up to the first EOS; PAD and MASK are dropped.
    std::string response_text(std::span<const int> ids) const;
    const std::string & symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

  private:
    std::vector<std::string> symbols_;
    int char_to_id_[256];
};

enum class Split { train, validation, test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct Problem {
    std::string id;
    std::string prompt;
    std::string solution;  // worked steps followed by "####<answer>"
    std::string answer;
    int difficulty = 1;  // number of reasoning steps
    Split split = Split::train;
};

struct DatasetSpec {
    std::string family = "add";  // add | mod_arith | chain
    int min_digits = 2;
    int max_digits = 2;
    int count = 1000;
    bool worked = false;  // emit intermediate steps before the answer marker
    double train_fraction = 0.8;
    double validation_fraction = 0.1;
    int min_difficulty = 0;  // 0 = no filter
    int max_difficulty = 0;
};

inline constexpr std::string_view kAnswerMarker = "####";

// Deterministic per seed; prompts are unique across the whole dataset so
// splits are disjoint.
std::vector<Problem> generate_dataset(const DatasetSpec & spec, std::uint64_t seed);

std::vector<Problem> select_split(const std::vector<Problem> & problems, Split split);

// Last integer after the last answer marker, leading zeros stripped.
std::optional<std::string> extract_answer(std::string_view response);
// 1 if the extracted answer equals the normalized truth, else 0.
double verify(std::string_view response, const Problem & problem);

// Unbiased pass@k for one problem with n samples of which c are correct.
double pass_at_k(int n, int c, int k);
// Mean over problems; each entry is {n, c}.
double pass_at_k(std::span<const std::pair<int, int>> per_problem, int k);

// Token layout shared by training and decoding.
// prompt: BOS + chars; response: solution chars + EOS, padded with PAD.
std::vector<int> prompt_tokens(const Vocab & vocab, const Problem & p);
std::vector<int> response_tokens(const Vocab & vocab, const Problem & p, int response_len);

}  // namespace mdlab
