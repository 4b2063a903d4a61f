#include "corefbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace corefbench {

ReportStyle report_style_from_string(const std::string& name) {
    if (name == "table1") return ReportStyle::table1;
    if (name == "table2") return ReportStyle::table2;
    throw std::invalid_argument("unknown report style \"" + name +
                                "\" (expected table1 or table2)");
}

namespace {

std::string fmt(const char* spec, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, value);
    return buf;
}

std::string percent1(double fraction) { return fmt("%.1f", fraction * 100.0); }
std::string percent2(double fraction) { return fmt("%.2f", fraction * 100.0); }

}  // namespace

std::string format_percent_cell(const SampleStats& stats) {
    if (!stats.mean) return "—";
    const std::string std_part = stats.std_dev ? percent2(*stats.std_dev) : "—";
    return percent1(*stats.mean) + " (" + std_part + ")";
}

std::string format_converged_count(std::size_t converged, std::size_t total) {
    return std::to_string(converged) + " out of " + std::to_string(total);
}

RenderedReport render_table1(const StatsByObjective& stats) {
    if (stats.empty()) throw std::invalid_argument("render_table1: no statistics");
    // column order: union of dataset names in first-seen (map) order
    std::vector<std::string> datasets;
    for (const auto& [obj, per_dataset] : stats) {
        for (const auto& [dataset, cell] : per_dataset) {
            if (std::find(datasets.begin(), datasets.end(), dataset) == datasets.end()) {
                datasets.push_back(dataset);
            }
        }
    }
    // best mean per column
    std::map<std::string, double> best_mean;
    for (const auto& dataset : datasets) {
        for (const auto& [obj, per_dataset] : stats) {
            auto it = per_dataset.find(dataset);
            if (it == per_dataset.end() || !it->second.mean) continue;
            auto best = best_mean.find(dataset);
            if (best == best_mean.end() || *it->second.mean > best->second) {
                best_mean[dataset] = *it->second.mean;
            }
        }
    }

    std::ostringstream md, tsv;
    md << "| Model |";
    tsv << "model";
    for (const auto& d : datasets) {
        md << " " << d << " |";
        tsv << "\t" << d;
    }
    md << "\n|---|";
    tsv << "\n";
    for (std::size_t i = 0; i < datasets.size(); ++i) md << "---|";
    md << "\n";

    for (const auto& [obj, per_dataset] : stats) {
        md << "| " << obj << " |";
        tsv << obj;
        for (const auto& dataset : datasets) {
            auto it = per_dataset.find(dataset);
            const SampleStats cell = it == per_dataset.end() ? SampleStats{} : it->second;
            std::string text = format_percent_cell(cell);
            bool is_best = false;
            if (cell.mean) {
                auto best = best_mean.find(dataset);
                is_best = best != best_mean.end() && *cell.mean == best->second;
            }
            if (is_best && cell.mean) {
                // bold the mean only, matching the table layout
                const std::string mean_str = percent1(*cell.mean);
                md << " **" << mean_str << "**" << text.substr(mean_str.size()) << " |";
                tsv << "\t" << text << "*";
            } else {
                md << " " << text << " |";
                tsv << "\t" << text;
            }
        }
        md << "\n";
        tsv << "\n";
    }
    return {md.str(), tsv.str()};
}

RenderedReport render_table2(const std::vector<std::pair<std::string, SampleStats>>& stats) {
    if (stats.empty()) throw std::invalid_argument("render_table2: no statistics");
    double best_max = -1.0, best_avg = -1.0;
    for (const auto& [obj, s] : stats) {
        if (s.max && *s.max > best_max) best_max = *s.max;
        if (s.mean && *s.mean > best_avg) best_avg = *s.mean;
    }
    std::ostringstream md, tsv;
    md << "| Model | Maximum | Average | Standard deviation | Number of converged |\n"
       << "|---|---|---|---|---|\n";
    tsv << "model\tmaximum\taverage\tstd\tconverged\n";
    for (const auto& [obj, s] : stats) {
        const std::string mx = s.max ? percent1(*s.max) : "—";
        const std::string avg = s.mean ? percent1(*s.mean) : "—";
        const std::string sd = s.std_dev ? percent2(*s.std_dev) : "—";
        const std::string count = format_converged_count(s.n, s.n_total);
        const bool mx_best = s.max && *s.max == best_max;
        const bool avg_best = s.mean && *s.mean == best_avg;
        md << "| " << obj << " | " << (mx_best ? "**" + mx + "**" : mx) << " | "
           << (avg_best ? "**" + avg + "**" : avg) << " | " << sd << " | " << count << " |\n";
        tsv << obj << "\t" << mx << (mx_best ? "*" : "") << "\t" << avg << (avg_best ? "*" : "")
            << "\t" << sd << "\t" << count << "\n";
    }
    return {md.str(), tsv.str()};
}

RenderedReport render_report(const StatsByObjective& stats, ReportStyle style) {
    if (style == ReportStyle::table1) return render_table1(stats);
    std::vector<std::pair<std::string, SampleStats>> flat;
    for (const auto& [obj, per_dataset] : stats) {
        if (per_dataset.empty()) {
            flat.emplace_back(obj, SampleStats{});
        } else {
            flat.emplace_back(obj, per_dataset.begin()->second);
        }
    }
    return render_table2(flat);
}

std::string render_significance_tsv(
    const std::vector<std::pair<std::string, SignificanceTable>>& per_dataset) {
    std::ostringstream out;
    out << "dataset\tobjective_a\tobjective_b\tt\tdf\tp\tsignificant\n";
    for (const auto& [dataset, table] : per_dataset) {
        for (std::size_t i = 0; i < table.names.size(); ++i) {
            for (std::size_t j = i + 1; j < table.names.size(); ++j) {
                const SignificanceCell& cell = table.cells[i][j];
                out << dataset << "\t" << table.names[i] << "\t" << table.names[j] << "\t";
                if (cell.untestable || !cell.test) {
                    out << "—\t—\t—\tuntestable\n";
                    continue;
                }
                out << fmt("%.6f", cell.test->t_statistic) << "\t"
                    << cell.test->degrees_of_freedom << "\t"
                    << fmt("%.6f", cell.test->two_tailed_p) << "\t"
                    << (cell.significant ? "yes" : "no") << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace corefbench
