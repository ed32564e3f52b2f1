#include "mdlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mdlab {

LinearOrder linearize(const TraceRecord & trace) {
    const std::size_t n = trace.positions.size();
    if (n == 0 || trace.steps.size() != n) {
        throw std::invalid_argument("linearize: trace needs matching, nonempty positions and steps");
    }
    std::vector<int> sorted_pos(trace.positions);
    std::sort(sorted_pos.begin(), sorted_pos.end());
    if (std::adjacent_find(sorted_pos.begin(), sorted_pos.end()) != sorted_pos.end()) {
        throw std::invalid_argument("linearize: duplicate position in trace " + trace.prompt_id);
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (trace.steps[a] != trace.steps[b]) {
            return trace.steps[a] < trace.steps[b];
        }
        return trace.positions[a] < trace.positions[b];
    });
    LinearOrder pi(n);
    for (std::size_t k = 0; k < n; ++k) {
        const int p = trace.positions[idx[k]];
        pi[k] = static_cast<int>(std::lower_bound(sorted_pos.begin(), sorted_pos.end(), p) - sorted_pos.begin()) + 1;
    }
    return pi;
}

int local_strict_events(std::span<const int> pi) {
    const int n = static_cast<int>(pi.size());
    if (n == 0) {
        throw std::invalid_argument("local_strict: empty order");
    }
    std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
    for (int v : pi) {
        if (v < 1 || v > n || seen[v]) {
            throw std::invalid_argument("local_strict: order is not a permutation of 1..n");
        }
        seen[v] = true;
    }
    int events = 0;
    int suffix_min = n + 1;
    for (int k = n - 1; k >= 0; --k) {
        suffix_min = std::min(suffix_min, pi[k]);
        events += pi[k] == suffix_min ? 1 : 0;
    }
    return events;
}

double local_strict(std::span<const int> pi) {
    return static_cast<double>(local_strict_events(pi)) / static_cast<double>(pi.size());
}

LocalStrictSummary aggregate_localstrict(std::span<const TraceRecord> traces) {
    if (traces.empty()) {
        throw std::invalid_argument("aggregate_localstrict: no traces");
    }
    LocalStrictSummary s;
    s.count = static_cast<int>(traces.size());
    std::vector<double> values;
    long events = 0, total = 0;
    for (const auto & t : traces) {
        const LinearOrder pi = linearize(t);
        const int e = local_strict_events(pi);
        values.push_back(static_cast<double>(e) / pi.size());
        events += e;
        total += static_cast<long>(pi.size());
    }
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.count;
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(var / s.count);
    s.mean_length = static_cast<double>(total) / s.count;
    s.pooled = static_cast<double>(events) / static_cast<double>(total);
    return s;
}

HeatmapGrid heatmap_grid(const TraceRecord & trace, int width) {
    const LinearOrder check = linearize(trace);
    (void)check;
    HeatmapGrid g;
    g.prompt_id = trace.prompt_id;
    g.model_tag = trace.model_tag;
    g.block_size = trace.block_size;
    g.eta = trace.eta;
    g.shifted = trace.shifted;
    g.num_steps = trace.num_steps;
    const int span = *std::max_element(trace.positions.begin(), trace.positions.end()) + 1;
    g.length = static_cast<int>(trace.positions.size());
    g.width = width > 0 ? width : span;
    const int nrows = (span + g.width - 1) / g.width;
    g.rows.assign(static_cast<std::size_t>(nrows), std::vector<int>(static_cast<std::size_t>(g.width), 0));
    for (std::size_t i = 0; i < trace.positions.size(); ++i) {
        const int p = trace.positions[i];
        g.rows[p / g.width][p % g.width] = trace.steps[i];
    }
    return g;
}

std::string format_heatmap(const HeatmapGrid & grid) {
    std::ostringstream os;
    os << "# prompt_id=" << grid.prompt_id << "\n";
    os << "# model_tag=" << grid.model_tag << "\n";
    os << "# block_size=" << grid.block_size << "\n";
    char eta[32];
    std::snprintf(eta, sizeof eta, "%.17g", grid.eta);
    os << "# eta=" << eta << "\n";
    os << "# shifted=" << (grid.shifted ? 1 : 0) << "\n";
    os << "# num_steps=" << grid.num_steps << "\n";
    os << "# length=" << grid.length << "\n";
    os << "# width=" << grid.width << "\n";
    for (const auto & row : grid.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            os << (j ? "," : "") << row[j];
        }
        os << "\n";
    }
    return os.str();
}

HeatmapGrid parse_heatmap(const std::string & text) {
    HeatmapGrid g;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                continue;
            }
            const std::string key = line.substr(2, eq - 2), val = line.substr(eq + 1);
            if (key == "prompt_id") g.prompt_id = val;
            else if (key == "model_tag") g.model_tag = val;
            else if (key == "block_size") g.block_size = std::stoi(val);
            else if (key == "eta") g.eta = std::stod(val);
            else if (key == "shifted") g.shifted = val == "1";
            else if (key == "num_steps") g.num_steps = std::stoi(val);
            else if (key == "length") g.length = std::stoi(val);
            else if (key == "width") g.width = std::stoi(val);
            continue;
        }
        std::vector<int> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            row.push_back(std::stoi(cell));
        }
        g.rows.push_back(std::move(row));
    }
    return g;
}

std::vector<SummaryRow> summarize(std::span<const TraceRecord> traces) {
    std::map<std::pair<std::string, int>, std::vector<TraceRecord>> groups;
    for (const auto & t : traces) {
        groups[{t.model_tag, t.block_size}].push_back(t);
    }
    std::vector<SummaryRow> out;
    for (const auto & [key, group] : groups) {
        out.push_back({key.first, key.second, aggregate_localstrict(group)});
    }
    return out;
}

std::string format_summary_csv(std::span<const SummaryRow> rows) {
    std::ostringstream os;
    os << "model_tag,block_size,mean_localstrict,stddev,trace_count,mean_length,pooled_localstrict\n";
    char buf[256];
    for (const auto & r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d,%.4f,%.6f", r.block_size, r.stats.mean, r.stats.stddev,
                      r.stats.count, r.stats.mean_length, r.stats.pooled);
        os << r.model_tag << "," << buf << "\n";
    }
    return os.str();
}

}  // namespace mdlab
