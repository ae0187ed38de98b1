/*
 * Copyright 2026 The kge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "kge/cli.hpp"
#include "kge/error.hpp"

namespace kge {

namespace {

namespace fs = std::filesystem;

struct Key {
  std::string model;
  std::string approach;
  std::string loss;
  bool inverse = false;

  friend auto operator<=>(const Key&, const Key&) = default;
};

struct Row {
  Key key;
  std::string path;
  std::string dataset;
  std::uint64_t seed = 0;
  Metrics test;
  Index best_epoch = 0;
};

std::string num(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string key_label(const Key& k) {
  return k.model + " / " + k.approach + " / " + k.loss + (k.inverse ? " / inverse" : "");
}

Row load_row(const fs::path& path) {
  const RunResult result = read_run_result(path);
  RunConfig config;
  try {
    config = RunConfig::from_json(result.config);
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const ExperimentConfig& e = config.experiment;
  Row row;
  row.key = {std::string(interaction_name(e.model.kind)), std::string(approach_name(e.training.approach)),
             std::string(loss_name(e.training.loss.kind)), e.inverse_relations};
  row.path = path.string();
  const auto& d = result.dataset;
  row.dataset = d.value("train", std::string()) + "|" + d.value("valid", std::string()) + "|" +
                d.value("test", std::string());
  row.seed = config.seed;
  row.test = result.test_filtered.get(Side::kBoth, RankType::kRealistic);
  row.best_epoch = result.best_epoch;
  return row;
}

struct Group {
  Key key;
  std::vector<const Row*> rows;

  double mean(double Metrics::*field) const {
    double s = 0;
    for (const Row* r : rows) s += r->test.*field;
    return s / static_cast<double>(rows.size());
  }
  std::vector<double> hits10() const {
    std::vector<double> v;
    for (const Row* r : rows) v.push_back(r->test.hits[3]);
    return v;
  }
};

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string render_svg(const std::vector<Group>& groups) {
  constexpr int kLabel = 320;
  constexpr int kPlot = 400;
  constexpr int kBar = 22;
  constexpr int kGap = 8;
  const int height = 40 + static_cast<int>(groups.size()) * (kBar + kGap) + 30;
  const int width = kLabel + kPlot + 80;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"" << kLabel << "\" y=\"20\" font-weight=\"bold\">Test Hits@10 (filtered, realistic)</text>\n";
  int y = 40;
  for (const Group& g : groups) {
    const std::vector<double> h = g.hits10();
    const double m = mean_of(h);
    const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
    svg << "<text x=\"" << kLabel - 8 << "\" y=\"" << y + kBar / 2 + 4 << "\" text-anchor=\"end\">"
        << xml_escape(key_label(g.key)) << "</text>\n";
    svg << "<rect x=\"" << kLabel << "\" y=\"" << y << "\" width=\"" << m * kPlot << "\" height=\"" << kBar
        << "\" fill=\"#4c78a8\"/>\n";
    if (h.size() > 1) {
      const double x0 = kLabel + *lo * kPlot;
      const double x1 = kLabel + *hi * kPlot;
      const int mid = y + kBar / 2;
      svg << "<line x1=\"" << x0 << "\" y1=\"" << mid << "\" x2=\"" << x1 << "\" y2=\"" << mid
          << "\" stroke=\"black\"/>\n";
      for (double x : {x0, x1}) {
        svg << "<line x1=\"" << x << "\" y1=\"" << y + 4 << "\" x2=\"" << x << "\" y2=\"" << y + kBar - 4
            << "\" stroke=\"black\"/>\n";
      }
    }
    svg << "<text x=\"" << kLabel + kPlot + 8 << "\" y=\"" << y + kBar / 2 + 4 << "\">" << num(m, 4) << " (n="
        << h.size() << ")</text>\n";
    y += kBar + kGap;
  }
  svg << "<line x1=\"" << kLabel << "\" y1=\"" << y << "\" x2=\"" << kLabel + kPlot << "\" y2=\"" << y
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double x = kLabel + t * kPlot / 4.0;
    svg << "<text x=\"" << x << "\" y=\"" << y + 16 << "\" text-anchor=\"middle\">" << num(t / 4.0) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

Report build_report(const std::vector<fs::path>& results, bool svg) {
  if (results.empty()) throw ConfigError("report: need at least one result");
  std::vector<Row> rows;
  for (const fs::path& p : results) rows.push_back(load_row(p));
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return std::tie(a.key, a.path) < std::tie(b.key, b.path); });

  std::vector<Group> groups;
  for (const Row& r : rows) {
    if (groups.empty() || !(groups.back().key == r.key)) groups.push_back({r.key, {}});
    groups.back().rows.push_back(&r);
  }
  std::set<std::string> datasets;
  for (const Row& r : rows) datasets.insert(r.dataset);

  Report report;
  report.mixed_datasets = datasets.size() > 1;

  std::ostringstream runs;
  runs << "model,approach,loss,inverse_relations,seed,best_epoch,mr,amr,mrr,hits_at_1,hits_at_3,hits_at_5,hits_at_10,"
          "dataset,path\n";
  for (const Row& r : rows) {
    runs << r.key.model << ',' << r.key.approach << ',' << r.key.loss << ',' << (r.key.inverse ? "yes" : "no") << ','
         << r.seed << ',' << r.best_epoch << ',' << num(r.test.mr, 10) << ',' << num(r.test.amr, 10) << ','
         << num(r.test.mrr, 10);
    for (double h : r.test.hits) runs << ',' << num(h, 10);
    runs << ',' << csv_field(r.dataset) << ',' << csv_field(r.path) << '\n';
  }
  report.runs_csv = runs.str();

  std::ostringstream grouped;
  grouped << "model,approach,loss,inverse_relations,runs,mean_mr,mean_amr,mean_mrr,mean_hits_at_10,std_hits_at_10\n";
  for (const Group& g : groups) {
    const std::vector<double> h = g.hits10();
    grouped << g.key.model << ',' << g.key.approach << ',' << g.key.loss << ',' << (g.key.inverse ? "yes" : "no")
            << ',' << g.rows.size() << ',' << num(g.mean(&Metrics::mr), 10) << ',' << num(g.mean(&Metrics::amr), 10)
            << ',' << num(g.mean(&Metrics::mrr), 10) << ',' << num(mean_of(h), 10) << ',' << num(std_of(h), 10)
            << '\n';
  }
  report.groups_csv = grouped.str();

  std::ostringstream md;
  md << "# Run comparison\n\n";
  if (report.mixed_datasets) {
    md << "> **Warning:** these results come from " << datasets.size()
       << " different datasets; metrics are not directly comparable.\n\n";
  }
  md << "Test metrics are filtered, realistic, averaged over head and tail prediction.\n\n";
  md << "## Runs\n\n| model | approach | loss | inverse | seed | MR | AMR | MRR | Hits@1 | Hits@10 | result |\n";
  md << "|---|---|---|---|---:|---:|---:|---:|---:|---:|---|\n";
  for (const Row& r : rows) {
    md << "| " << r.key.model << " | " << r.key.approach << " | " << r.key.loss << " | "
       << (r.key.inverse ? "yes" : "no") << " | " << r.seed << " | " << num(r.test.mr, 5) << " | "
       << num(r.test.amr, 4) << " | " << num(r.test.mrr, 4) << " | " << num(r.test.hits[0], 4) << " | "
       << num(r.test.hits[3], 4) << " | " << r.path << " |\n";
  }
  md << "\n## Configurations\n\n| model | approach | loss | inverse | runs | mean MRR | mean Hits@10 | std Hits@10 |\n";
  md << "|---|---|---|---|---:|---:|---:|---:|\n";
  for (const Group& g : groups) {
    const std::vector<double> h = g.hits10();
    md << "| " << g.key.model << " | " << g.key.approach << " | " << g.key.loss << " | "
       << (g.key.inverse ? "yes" : "no") << " | " << g.rows.size() << " | " << num(g.mean(&Metrics::mrr), 4) << " | "
       << num(mean_of(h), 4) << " | " << num(std_of(h), 4) << " |\n";
  }
  report.markdown = md.str();
  if (svg) report.svg = render_svg(groups);
  return report;
}

Report cmd_report(const std::vector<fs::path>& results, const ReportOptions& options) {
  Report report = build_report(results, options.svg);
  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    auto write = [&](const char* name, const std::string& text) {
      std::ofstream out(options.output_dir / name, std::ios::binary | std::ios::trunc);
      out << text;
      if (!out) throw DataError("cannot write " + (options.output_dir / name).string());
    };
    write("runs.csv", report.runs_csv);
    write("groups.csv", report.groups_csv);
    write("report.md", report.markdown);
    if (report.svg) write("report.svg", *report.svg);
  }
  return report;
}

}  // namespace kge
