#include "mdlab/tasks.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace mdlab {

namespace {

constexpr std::string_view kAlphabet = "0123456789+-*%=#;";

std::int64_t pow10(int d) {
    std::int64_t p = 1;
    for (int i = 0; i < d; ++i) {
        p *= 10;
    }
    return p;
}

std::int64_t draw_number(int min_digits, int max_digits, std::mt19937_64 & rng) {
    const int d = std::uniform_int_distribution<int>(min_digits, max_digits)(rng);
    const std::int64_t lo = d == 1 ? 0 : pow10(d - 1);
    const std::int64_t hi = pow10(d) - 1;
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

std::string normalize_integer(std::string_view s) {
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
        neg = true;
        s.remove_prefix(1);
    }
    while (s.size() > 1 && s.front() == '0') {
        s.remove_prefix(1);
    }
    if (s == "0") {
        neg = false;
    }
    return (neg ? "-" : "") + std::string(s);
}

Problem make_add(std::int64_t a, std::int64_t b, bool worked) {
    Problem p;
    p.prompt = std::to_string(a) + "+" + std::to_string(b) + "=";
    const std::string sa = std::to_string(a), sb = std::to_string(b);
    const int cols = static_cast<int>(std::max(sa.size(), sb.size()));
    std::string steps;
    int carry = 0;
    for (int i = 0; i < cols; ++i) {
        const int da = i < static_cast<int>(sa.size()) ? sa[sa.size() - 1 - i] - '0' : 0;
        const int db = i < static_cast<int>(sb.size()) ? sb[sb.size() - 1 - i] - '0' : 0;
        const int s = da + db + carry;
        steps += (i ? ";" : "") + std::to_string(s);
        carry = s / 10;
    }
    p.answer = std::to_string(a + b);
    p.solution = (worked ? steps : "") + std::string(kAnswerMarker) + p.answer;
    p.difficulty = cols;
    return p;
}

Problem make_mod(std::int64_t a, std::int64_t b, std::int64_t m, bool worked) {
    Problem p;
    p.prompt = std::to_string(a) + "*" + std::to_string(b) + "%" + std::to_string(m) + "=";
    p.answer = std::to_string((a * b) % m);
    p.solution = (worked ? std::to_string(a * b) : "") + std::string(kAnswerMarker) + p.answer;
    p.difficulty = 2;
    return p;
}

Problem make_chain(std::int64_t start, int steps, std::mt19937_64 & rng, bool worked) {
    Problem p;
    p.prompt = std::to_string(start);
    std::string trace;
    std::int64_t v = start;
    for (int s = 0; s < steps; ++s) {
        const int operand = std::uniform_int_distribution<int>(1, 9)(rng);
        int op = std::uniform_int_distribution<int>(0, 2)(rng);
        if (op == 1 && operand > v) {
            op = 0;
        }
        const char sym = "+-*"[op];
        v = op == 0 ? v + operand : op == 1 ? v - operand : v * operand;
        p.prompt += std::string(";") + sym + std::to_string(operand);
        trace += (s ? ";" : "") + std::to_string(v);
    }
    p.prompt += "=";
    p.answer = std::to_string(v);
    p.solution = (worked ? trace : "") + std::string(kAnswerMarker) + p.answer;
    p.difficulty = steps;
    return p;
}

}  // namespace

Vocab::Vocab() {
    std::fill(std::begin(char_to_id_), std::end(char_to_id_), -1);
    symbols_ = {"<PAD>", "<MASK>", "<EOS>", "<BOS>"};
    for (char c : kAlphabet) {
        char_to_id_[static_cast<unsigned char>(c)] = static_cast<int>(symbols_.size());
        symbols_.emplace_back(1, c);
    }
}

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) {
        const int id = char_to_id_[static_cast<unsigned char>(c)];
        if (id < 0) {
            throw std::invalid_argument(std::string("character '") + c + "' is not in the vocabulary");
        }
        out.push_back(id);
    }
    return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        out += symbol(id);
    }
    return out;
}

std::string Vocab::response_text(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kEos) {
            break;
        }
        if (id >= 4 && id < size()) {
            out += symbols_[static_cast<std::size_t>(id)];
        }
    }
    return out;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(std::string_view s) {
    if (s == "train") {
        return Split::train;
    }
    if (s == "validation") {
        return Split::validation;
    }
    if (s == "test") {
        return Split::test;
    }
    throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

std::vector<Problem> generate_dataset(const DatasetSpec & spec, std::uint64_t seed) {
    if (spec.count < 1) {
        throw std::invalid_argument("dataset count must be >= 1");
    }
    if (spec.min_digits < 1 || spec.max_digits < spec.min_digits || spec.max_digits > 9) {
        throw std::invalid_argument("digit range [" + std::to_string(spec.min_digits) + ", " +
                                    std::to_string(spec.max_digits) + "] is empty or unsupported");
    }
    if (spec.family != "add" && spec.family != "mod_arith" && spec.family != "chain") {
        throw std::invalid_argument("unknown task family '" + spec.family + "'");
    }
    if (spec.train_fraction < 0 || spec.validation_fraction < 0 ||
        spec.train_fraction + spec.validation_fraction > 1.0) {
        throw std::invalid_argument("split fractions must be nonnegative and sum to at most 1");
    }
    std::mt19937_64 rng(seed);
    std::vector<Problem> out;
    std::unordered_set<std::string> seen;
    const long max_attempts = 200L * spec.count + 1000;
    for (long attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < spec.count; ++attempt) {
        Problem p;
        if (spec.family == "add") {
            p = make_add(draw_number(spec.min_digits, spec.max_digits, rng),
                         draw_number(spec.min_digits, spec.max_digits, rng), spec.worked);
        } else if (spec.family == "mod_arith") {
            const auto a = draw_number(spec.min_digits, spec.max_digits, rng);
            const auto b = draw_number(spec.min_digits, spec.max_digits, rng);
            const auto m = std::uniform_int_distribution<std::int64_t>(2, 9)(rng);
            p = make_mod(a, b, m, spec.worked);
        } else {
            const auto start = draw_number(spec.min_digits, spec.max_digits, rng);
            const int steps = std::uniform_int_distribution<int>(2, 3)(rng);
            p = make_chain(start, steps, rng, spec.worked);
        }
        if (spec.min_difficulty > 0 && p.difficulty < spec.min_difficulty) {
            continue;
        }
        if (spec.max_difficulty > 0 && p.difficulty > spec.max_difficulty) {
            continue;
        }
        if (!seen.insert(p.prompt).second) {
            continue;
        }
        out.push_back(std::move(p));
    }
    if (static_cast<int>(out.size()) < spec.count) {
        throw std::invalid_argument("family '" + spec.family + "' cannot produce " + std::to_string(spec.count) +
                                    " distinct problems in this digit range");
    }
    std::shuffle(out.begin(), out.end(), rng);
    const int n_train = static_cast<int>(spec.count * spec.train_fraction + 1e-9);
    const int n_val = static_cast<int>(spec.count * spec.validation_fraction + 1e-9);
    for (int i = 0; i < spec.count; ++i) {
        out[i].id = spec.family + "-" + std::to_string(i);
        out[i].split = i < n_train ? Split::train : i < n_train + n_val ? Split::validation : Split::test;
    }
    return out;
}

std::vector<Problem> select_split(const std::vector<Problem> & problems, Split split) {
    std::vector<Problem> out;
    for (const auto & p : problems) {
        if (p.split == split) {
            out.push_back(p);
        }
    }
    return out;
}

std::optional<std::string> extract_answer(std::string_view response) {
    const auto marker = response.rfind(kAnswerMarker);
    if (marker == std::string_view::npos) {
        return std::nullopt;
    }
    const std::string_view tail = response.substr(marker + kAnswerMarker.size());
    std::optional<std::string> last;
    for (std::size_t i = 0; i < tail.size();) {
        if (tail[i] >= '0' && tail[i] <= '9') {
            std::size_t j = i;
            while (j < tail.size() && tail[j] >= '0' && tail[j] <= '9') {
                ++j;
            }
            const bool neg = i > 0 && tail[i - 1] == '-' && (i == 1 || !(tail[i - 2] >= '0' && tail[i - 2] <= '9'));
            last = normalize_integer(tail.substr(neg ? i - 1 : i, j - i + (neg ? 1 : 0)));
            i = j;
        } else {
            ++i;
        }
    }
    return last;
}

double verify(std::string_view response, const Problem & problem) {
    const auto got = extract_answer(response);
    if (!got) {
        return 0.0;
    }
    return *got == normalize_integer(problem.answer) ? 1.0 : 0.0;
}

double pass_at_k(int n, int c, int k) {
    if (k < 1 || k > n) {
        throw std::invalid_argument("pass@k needs 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) +
                                    ")");
    }
    if (c < 0 || c > n) {
        throw std::invalid_argument("pass@k needs 0 <= c <= n");
    }
    if (n - c < k) {
        return 1.0;
    }
    // 1 - C(n-c, k) / C(n, k) as a running product
    double miss = 1.0;
    for (int i = n - c + 1; i <= n; ++i) {
        miss *= 1.0 - static_cast<double>(k) / i;
    }
    return 1.0 - miss;
}

double pass_at_k(std::span<const std::pair<int, int>> per_problem, int k) {
    if (per_problem.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (auto [n, c] : per_problem) {
        s += pass_at_k(n, c, k);
    }
    return s / static_cast<double>(per_problem.size());
}

std::vector<int> prompt_tokens(const Vocab & vocab, const Problem & p) {
    std::vector<int> out{Vocab::kBos};
    const auto body = vocab.encode(p.prompt);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::vector<int> response_tokens(const Vocab & vocab, const Problem & p, int response_len) {
    std::vector<int> out = vocab.encode(p.solution);
    out.push_back(Vocab::kEos);
    if (static_cast<int>(out.size()) > response_len) {
        throw std::invalid_argument("solution of problem " + p.id + " needs " + std::to_string(out.size()) +
                                    " positions but response length is " + std::to_string(response_len));
    }
    out.resize(static_cast<std::size_t>(response_len), Vocab::kPad);
    return out;
}

}  // namespace mdlab
