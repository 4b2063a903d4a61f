#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "corefbench/stats.hpp"

namespace corefbench {

enum class ReportStyle { table1, table2 };
ReportStyle report_style_from_string(const std::string& name);

/// "78.2 (1.00)": accuracy in percent with one decimal, standard deviation in
/// percent with two. An absent std renders as "(—)"; an absent cell as "—".
std::string format_percent_cell(const SampleStats& stats);

/// "49 out of 96"
std::string format_converged_count(std::size_t converged, std::size_t total);

struct RenderedReport {
    std::string markdown;
    std::string tsv;
};

// stats[objective][dataset]
using StatsByObjective = std::map<std::string, std::map<std::string, SampleStats>>;

/// Seed-wise table: rows are objectives, columns datasets, cells
/// "mean% (std)". The best mean per column is bolded in markdown and marked
/// with a trailing "*" in the TSV.
RenderedReport render_table1(const StatsByObjective& stats);

/// Hyperparameter-wide table: per objective, maximum / average / standard
/// deviation over the converged runs plus "k out of m".
RenderedReport render_table2(const std::vector<std::pair<std::string, SampleStats>>& stats);

/// Dispatch on style. table2 uses the first dataset entry of each objective.
RenderedReport render_report(const StatsByObjective& stats, ReportStyle style);

/// Tab-separated pairwise test listing, one block per dataset.
std::string render_significance_tsv(
    const std::vector<std::pair<std::string, SignificanceTable>>& per_dataset);

}  // namespace corefbench
