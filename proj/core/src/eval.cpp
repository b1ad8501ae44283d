#include "hsseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "hsseg/error.hpp"

namespace hsseg {

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void SegConfusion::validate() const {
  std::int64_t tp = 0;
  for (const auto& r : regimes) {
    if (r.tp < 0 || r.fp < 0 || r.fn < 0) throw ValidationError("confusion: negative count");
    tp += r.tp;
  }
  if (total < 0 || tp > total) throw ValidationError("confusion: true positives exceed total");
}

SegConfusion& SegConfusion::operator+=(const SegConfusion& other) {
  if (regimes.size() < other.regimes.size()) regimes.resize(other.regimes.size());
  for (std::size_t j = 0; j < other.regimes.size(); ++j) {
    regimes[j].tp += other.regimes[j].tp;
    regimes[j].fp += other.regimes[j].fp;
    regimes[j].fn += other.regimes[j].fn;
  }
  total += other.total;
  return *this;
}

SegConfusion segmentation_confusion(const StateSequence& pred, const StateSequence& ref, int k) {
  if (pred.size() != ref.size()) {
    throw ValidationError("segmentation_confusion: length mismatch (" + std::to_string(pred.size()) +
                          " vs " + std::to_string(ref.size()) + ")");
  }
  SegConfusion c;
  c.regimes.resize(static_cast<std::size_t>(k));
  c.total = static_cast<std::int64_t>(pred.size());
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const int p = pred[t];
    const int r = ref[t];
    if (p < 1 || p > k || r < 1 || r > k) {
      throw ValidationError("segmentation_confusion: state outside 1.." + std::to_string(k) +
                            " at sample " + std::to_string(t));
    }
    if (p == r) {
      ++c.regimes[static_cast<std::size_t>(p - 1)].tp;
    } else {
      ++c.regimes[static_cast<std::size_t>(p - 1)].fp;
      ++c.regimes[static_cast<std::size_t>(r - 1)].fn;
    }
  }
  return c;
}

std::optional<double> f1_from(std::optional<double> se, std::optional<double> ppv) {
  if (!se || !ppv) return std::nullopt;
  if (*se + *ppv == 0.0) return 0.0;
  return 2.0 * *se * *ppv / (*se + *ppv);
}

SegMetrics seg_metrics(const SegConfusion& c) {
  c.validate();
  SegMetrics m;
  std::int64_t tp = 0;
  for (const auto& r : c.regimes) {
    RatioSet s;
    s.se = ratio(r.tp, r.tp + r.fn);
    s.ppv = ratio(r.tp, r.tp + r.fp);
    s.f1 = f1_from(s.se, s.ppv);
    m.per_regime.push_back(s);
    tp += r.tp;
  }
  m.acc = ratio(tp, c.total);
  return m;
}

ClassMetrics class_metrics_plain(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) throw ValidationError("class metrics: negative count");
  const std::int64_t all = tp + fp + tn + fn;
  if (all == 0) throw ValidationError("class metrics: all counts are zero");
  ClassMetrics m;
  m.se = ratio(tp, tp + fn);
  m.sp = ratio(tn, tn + fp);
  m.ppv = ratio(tp, tp + fp);
  m.acc = ratio(tp + tn, all);
  m.f1 = f1_from(m.se, m.ppv);
  return m;
}

void XFactorConfusion::validate() const {
  for (int i = 0; i < 2; ++i) {
    for (auto v : {aa[i], aq[i], an[i], na[i], nq[i], nn[i]}) {
      if (v < 0) throw ValidationError("X-Factor confusion: negative count");
    }
  }
  if (std::abs(wa[0] + wa[1] - 1.0) > 1e-12 || std::abs(wn[0] + wn[1] - 1.0) > 1e-12) {
    throw ValidationError("X-Factor confusion: quality weights must sum to 1");
  }
}

XFactorMetrics class_metrics_xfactor(const XFactorConfusion& x) {
  x.validate();
  XFactorMetrics m;
  auto term = [&](double w, std::int64_t num, std::int64_t den, const char* name) {
    if (den == 0) {
      m.absent_terms.emplace_back(name);
      return 0.0;
    }
    return w * static_cast<double>(num) / static_cast<double>(den);
  };
  m.se = term(x.wa[0], x.aa[0], x.aa[0] + x.aq[0] + x.an[0], "Se good") +
         term(x.wa[1], x.aa[1] + x.aq[1], x.aa[1] + x.aq[1] + x.an[1], "Se poor");
  m.sp = term(x.wn[0], x.nn[0], x.na[0] + x.nq[0] + x.nn[0], "Sp good") +
         term(x.wn[1], x.nn[1] + x.nq[1], x.na[1] + x.nq[1] + x.nn[1], "Sp poor");
  m.macc = 0.5 * (m.se + m.sp);
  return m;
}

double penalized_f1(std::int64_t aa1, std::int64_t an1, std::int64_t na1, std::int64_t aq1,
                    std::int64_t nq1, double alpha) {
  if (aa1 < 0 || an1 < 0 || na1 < 0 || aq1 < 0 || nq1 < 0) {
    throw ValidationError("penalized F1: negative count");
  }
  if (!(alpha > 0.0)) throw ValidationError("penalized F1: alpha must be positive");
  const double num = 2.0 * (alpha + 1.0) * static_cast<double>(aa1);
  const double den = num + alpha * static_cast<double>(an1 + na1) + static_cast<double>(aq1 + nq1);
  if (den == 0.0) throw ValidationError("penalized F1: zero denominator");
  return num / den;
}

std::array<double, 2> quality_weights(const DatasetManifest& train, ClassLabel label) {
  std::size_t good = 0;
  std::size_t poor = 0;
  for (const auto& e : train.entries) {
    if (e.label != label) continue;
    (e.quality == Quality::Good ? good : poor) += 1;
  }
  if (good + poor == 0) return {1.0, 0.0};
  const double g = static_cast<double>(good) / static_cast<double>(good + poor);
  return {g, 1.0 - g};
}

std::vector<Fold> kfold_split(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold: k must be at least 2");
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    by_class[manifest.entries[i].label].push_back(i);
  }
  if (by_class.empty()) throw ValidationError("kfold: no entries");
  std::vector<int> fold_of(manifest.entries.size(), 0);
  std::mt19937_64 rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < static_cast<std::size_t>(k)) {
      throw ValidationError("kfold: class '" + std::string(to_string(label)) + "' has " +
                            std::to_string(idx.size()) + " entries, fewer than k = " + std::to_string(k));
    }
    // Fisher-Yates with raw engine output keeps folds identical across
    // standard library implementations.
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t r = 0; r < idx.size(); ++r) fold_of[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      ManifestEntry e = manifest.entries[i];
      const bool test = fold_of[i] == f;
      e.split = test ? "test" : "train";
      (test ? folds[static_cast<std::size_t>(f)].test : folds[static_cast<std::size_t>(f)].train)
          .entries.push_back(std::move(e));
    }
  }
  return folds;
}

MeanSd mean_sd(const std::vector<std::optional<double>>& values) {
  MeanSd out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++out.n;
  }
  if (out.n == 0) return out;
  const double mean = sum / static_cast<double>(out.n);
  out.mean = mean;
  if (out.n >= 2) {
    double ss = 0.0;
    for (const auto& v : values) {
      if (v) ss += (*v - mean) * (*v - mean);
    }
    out.sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  }
  return out;
}

std::string format_percent(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

namespace {

// Column order: Acc, then Se, P+, F1 per regime.
std::vector<std::optional<double>> flatten(const SegMetrics& m) {
  std::vector<std::optional<double>> out{m.acc};
  for (const auto& r : m.per_regime) {
    out.push_back(r.se);
    out.push_back(r.ppv);
    out.push_back(r.f1);
  }
  return out;
}

std::vector<std::string> columns(std::size_t k) {
  static const char* names[] = {"S1", "Sys", "S2", "Dia"};
  std::vector<std::string> out{"acc"};
  for (std::size_t j = 0; j < k; ++j) {
    const std::string n = j < 4 ? names[j] : "R" + std::to_string(j + 1);
    out.push_back("se_" + n);
    out.push_back("ppv_" + n);
    out.push_back("f1_" + n);
  }
  return out;
}

struct Summary {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;
  std::vector<MeanSd> stats;
};

Summary summarize(const std::vector<RecordingSegResult>& rows) {
  Summary s;
  const std::size_t k = rows.empty() ? kNumRegimes : rows.front().metrics.per_regime.size();
  s.header = columns(k);
  for (const auto& r : rows) s.rows.push_back(flatten(r.metrics));
  for (std::size_t c = 0; c < s.header.size(); ++c) {
    std::vector<std::optional<double>> col;
    for (const auto& r : s.rows) col.push_back(c < r.size() ? r[c] : std::nullopt);
    s.stats.push_back(mean_sd(col));
  }
  return s;
}

}  // namespace

void write_seg_report_csv(const std::vector<RecordingSegResult>& rows, std::ostream& out) {
  const Summary s = summarize(rows);
  out << "recording";
  for (const auto& h : s.header) out << ',' << h;
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i].id;
    for (const auto& v : s.rows[i]) out << ',' << format_percent(v);
    out << '\n';
  }
  out << "mean";
  for (const auto& st : s.stats) out << ',' << format_percent(st.mean);
  out << "\nsd";
  for (const auto& st : s.stats) out << ',' << format_percent(st.sd);
  out << '\n';
}

void write_seg_report_table(const std::vector<RecordingSegResult>& rows, std::ostream& out) {
  const Summary s = summarize(rows);
  out << std::left << std::setw(10) << "metric" << std::right << std::setw(10) << "mean" << std::setw(10)
      << "sd" << std::setw(6) << "n" << '\n';
  for (std::size_t c = 0; c < s.header.size(); ++c) {
    out << std::left << std::setw(10) << s.header[c] << std::right << std::setw(10)
        << format_percent(s.stats[c].mean) << std::setw(10) << format_percent(s.stats[c].sd)
        << std::setw(6) << s.stats[c].n << '\n';
  }
}

}  // namespace hsseg
