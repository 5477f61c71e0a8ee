#include "core/report/report.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace sslseg::report {
namespace {

constexpr const char* kCorpusOrder[] = {"CIFAR-10",         "mini-ImageNet",     "BUS",
                                        "BUS+CIFAR-10",     "BUS+mini-ImageNet", "Multi-organ"};

int method_rank(std::string_view method) {
  if (method == kSupervised) return 0;
  for (int i = 0; i < 3; ++i) {
    if (method == kSslMethods[i]) return i + 1;
  }
  return 4;
}

std::string fraction_label(double f) { return fmt::format("{}%", static_cast<int>(std::lround(f * 100.0))); }

Cell summarize(const std::vector<double>& values) {
  Cell c;
  c.n = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  c.mean = sum / c.n;
  if (c.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - c.mean) * (v - c.mean);
    c.std = std::sqrt(ss / (c.n - 1));
  }
  return c;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string render(const std::vector<std::vector<std::string>>& grid) {
  std::vector<std::size_t> widths;
  for (const auto& row : grid) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::string out;
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) line += (i ? "  " : "") + pad(row[i], widths[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace

const Cell* Row::cell(double fraction) const {
  for (const auto& [f, c] : cells) {
    if (std::abs(f - fraction) < 1e-9) return &c;
  }
  return nullptr;
}

const Row* ResultsTable::find(std::string_view method, std::string_view corpus) const {
  for (const auto& r : rows) {
    if (r.method == method && r.corpus == corpus) return &r;
  }
  return nullptr;
}

const MeanRow* MeanTable::find(std::string_view corpus) const {
  for (const auto& r : rows) {
    if (r.corpus == corpus) return &r;
  }
  return nullptr;
}

int corpus_rank(std::string_view corpus) {
  for (int i = 0; i < 6; ++i) {
    if (corpus == kCorpusOrder[i]) return i;
  }
  return 6;
}

ResultsTable aggregate(const std::vector<finetune::RunResult>& results) {
  ResultsTable table;
  if (results.empty()) return table;
  table.arch = results.front().arch;
  table.image_size = results.front().image_size;
  // (method, corpus) -> fraction -> values
  std::map<std::pair<std::string, std::string>, std::map<double, std::vector<double>>> groups;
  for (const auto& r : results) {
    if (r.arch != table.arch || r.image_size != table.image_size) {
      throw ValidationError(fmt::format("cannot aggregate {} {}px with {} {}px into one table", r.arch, r.image_size,
                                        table.arch, table.image_size));
    }
    if (!(r.test_dice >= 0.0 && r.test_dice <= 1.0)) {
      throw ValidationError(fmt::format("test Dice {} outside [0, 1]", r.test_dice));
    }
    // Fractions are keyed at print precision so 0.1 from a log matches 0.1.
    const double f = std::round(r.fraction * 1e6) / 1e6;
    groups[{r.method, r.corpus}][f].push_back(r.test_dice);
  }
  for (auto& [key, by_fraction] : groups) {
    Row row{key.first, key.second, {}};
    for (auto& [f, values] : by_fraction) {
      // Order-independent sum for permutation invariance.
      std::sort(values.begin(), values.end());
      row.cells[f] = summarize(values);
    }
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const Row& a, const Row& b) {
    const bool sa = a.method == kSupervised, sb = b.method == kSupervised;
    return std::make_tuple(!sa, corpus_rank(a.corpus), a.corpus, method_rank(a.method), a.method) <
           std::make_tuple(!sb, corpus_rank(b.corpus), b.corpus, method_rank(b.method), b.method);
  });
  return table;
}

std::vector<ResultsTable> aggregate_all(const std::vector<finetune::RunResult>& results) {
  std::map<std::pair<std::string, int>, std::vector<finetune::RunResult>> by_config;
  for (const auto& r : results) by_config[{r.arch, r.image_size}].push_back(r);
  std::vector<ResultsTable> out;
  for (const auto& [key, group] : by_config) out.push_back(aggregate(group));
  return out;
}

double round3(double x) {
  // The nudge keeps decimal ties like 0.5985 from rounding down through
  // binary representation error.
  return std::round(x * 1000.0 + (x >= 0 ? 1e-7 : -1e-7)) / 1000.0;
}

MeanTable dataset_mean_table(const ResultsTable& table) {
  MeanTable out;
  out.arch = table.arch;
  out.image_size = table.image_size;
  std::vector<std::string> corpora;
  for (const auto& r : table.rows) {
    if (r.method == kSupervised) continue;
    if (std::find(corpora.begin(), corpora.end(), r.corpus) == corpora.end()) corpora.push_back(r.corpus);
  }
  for (const auto& corpus : corpora) {
    std::vector<const Row*> rows;
    std::string missing;
    for (const char* m : kSslMethods) {
      const Row* r = table.find(m, corpus);
      if (!r) missing += (missing.empty() ? "" : ", ") + std::string(m);
      rows.push_back(r);
    }
    if (!missing.empty()) {
      throw ValidationError(fmt::format("corpus {} is missing methods: {}", corpus, missing));
    }
    MeanRow mr{corpus, {}};
    for (double f : kFractions) {
      double sum = 0.0;
      bool complete = true;
      for (const Row* r : rows) {
        const Cell* c = r->cell(f);
        if (!c) complete = false;
        else sum += c->mean;
      }
      if (complete) mr.cells[f] = round3(sum / 3.0);
    }
    out.rows.push_back(std::move(mr));
  }
  return out;
}

std::string format_text(const ResultsTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Method", "Dataset"};
  for (double f : kFractions) header.push_back(fmt::format("DC ({})", fraction_label(f)));
  header.push_back("n");
  grid.push_back(header);
  for (const auto& r : table.rows) {
    std::vector<std::string> line = {r.method, r.corpus};
    std::string ns;
    for (double f : kFractions) {
      const Cell* c = r.cell(f);
      line.push_back(c ? fmt::format("{:.3f} +/- {:.3f}", c->mean, c->std) : "-");
      ns += (ns.empty() ? "" : "/") + (c ? std::to_string(c->n) : std::string("-"));
    }
    line.push_back(ns);
    grid.push_back(std::move(line));
  }
  std::string out = fmt::format("# {} {}x{}\n", table.arch, table.image_size, table.image_size);
  out += render(grid);
  out += "# std: sample standard deviation (n - 1 denominator); '-' marks an absent cell\n";
  return out;
}

std::string format_csv(const ResultsTable& table) {
  std::string out = "arch,size,method,dataset,fraction,mean,std,n\n";
  for (const auto& r : table.rows) {
    for (double f : kFractions) {
      const Cell* c = r.cell(f);
      if (!c) continue;
      out += fmt::format("{},{},{},{},{},{:.3f},{:.3f},{}\n", csv_field(table.arch), table.image_size,
                         csv_field(r.method), csv_field(r.corpus), f, c->mean, c->std, c->n);
    }
  }
  return out;
}

std::string format_text(const MeanTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Dataset"};
  for (double f : kFractions) header.push_back(fmt::format("DC ({})", fraction_label(f)));
  grid.push_back(header);
  for (const auto& r : table.rows) {
    std::vector<std::string> line = {r.corpus};
    for (double f : kFractions) {
      const auto it = r.cells.find(f);
      line.push_back(it == r.cells.end() ? "-" : fmt::format("{:.3f}", it->second));
    }
    grid.push_back(std::move(line));
  }
  std::string out = fmt::format("# mean over MoCo, SimCLR, SimSiam; {} {}x{}\n", table.arch, table.image_size,
                                table.image_size);
  return out + render(grid);
}

std::string format_csv(const MeanTable& table) {
  std::string out = "arch,size,dataset,fraction,mean\n";
  for (const auto& r : table.rows) {
    for (double f : kFractions) {
      const auto it = r.cells.find(f);
      if (it == r.cells.end()) continue;
      out += fmt::format("{},{},{},{},{:.3f}\n", csv_field(table.arch), table.image_size, csv_field(r.corpus), f,
                         it->second);
    }
  }
  return out;
}

}  // namespace sslseg::report
