#pragma once

#include "mdlab/decoder.hpp"

#include <span>
#include <string>
#include <vector>

namespace mdlab {

// pi[k] is the 1-based rank (by position) of the k-th finalized token.
using LinearOrder = std::vector<int>;

// Stable sort of positions by (step, position). Duplicate positions throw.
LinearOrder linearize(const TraceRecord & trace);

// (1/n) * #{k : pi[k] = min_{j>=k} pi[j]}. Throws unless pi is a permutation of 1..n.
double local_strict(std::span<const int> pi);
int local_strict_events(std::span<const int> pi);

struct LocalStrictSummary {
    double mean = 0.0;  // unweighted over traces
    double stddev = 0.0;  // population
    int count = 0;
    double mean_length = 0.0;
    double pooled = 0.0;  // qualifying events over all events, length-weighted
};
LocalStrictSummary aggregate_localstrict(std::span<const TraceRecord> traces);

struct HeatmapGrid {
    std::string prompt_id;
    std::string model_tag;
    int block_size = 0;
    double eta = 0.0;
    bool shifted = false;
    int num_steps = 0;
    int length = 0;
    int width = 0;
    std::vector<std::vector<int>> rows;  // first-unmask step, 0 past the end
};

// The trace reshaped to rows of `width` (0 means one row).
HeatmapGrid heatmap_grid(const TraceRecord & trace, int width = 0);
// Metadata as '#' comment lines, then comma-separated rows.
std::string format_heatmap(const HeatmapGrid & grid);
HeatmapGrid parse_heatmap(const std::string & text);

struct SummaryRow {
    std::string model_tag;
    int block_size = 0;
    LocalStrictSummary stats;
};
std::vector<SummaryRow> summarize(std::span<const TraceRecord> traces);
std::string format_summary_csv(std::span<const SummaryRow> rows);

}  // namespace mdlab
