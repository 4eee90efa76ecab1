#pragma once

// Skill metrics of one passage: peak force, force impulse, 1-13 Hz force
// spectrum band and execution time, plus batch summaries and the report file.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canalrl/errors.hpp"

namespace canalrl {

// Force modulus sampled uniformly: sample k is taken at t = k / sample_rate.
struct ForceSeries {
  std::vector<double> forces;
  double sample_rate = 50.0;

  [[nodiscard]] std::size_t size() const { return forces.size(); }
  [[nodiscard]] double time_at(std::size_t k) const { return static_cast<double>(k) / sample_rate; }
  [[nodiscard]] double duration() const { return static_cast<double>(forces.size()) / sample_rate; }

  void validate() const {
    detail::require(sample_rate > 0.0, "ForceSeries: sample rate must be positive");
    for (double f : forces) detail::require(f >= 0.0 && std::isfinite(f), "ForceSeries: forces must be finite and >= 0");
  }
};

inline double max_force(const ForceSeries& series) {
  if (series.forces.empty()) throw InvalidArgument("max_force: empty series");
  series.validate();
  return *std::max_element(series.forces.begin(), series.forces.end());
}

// Trapezoidal integral of the force over time (newton-seconds).
inline double integral_force(const ForceSeries& series) {
  if (series.forces.size() < 2) throw InvalidArgument("integral_force: need at least two samples");
  series.validate();
  const double h = 1.0 / series.sample_rate;
  double sum = 0.0;
  for (std::size_t k = 1; k < series.forces.size(); ++k) sum += 0.5 * h * (series.forces[k - 1] + series.forces[k]);
  return sum;
}

// One-sided amplitude spectrum 2|X_k|/N of the mean-removed signal for
// k = 0 .. N/2 (bin k sits at k * sample_rate / N Hz).
inline std::vector<double> amplitude_spectrum(const ForceSeries& series) {
  const std::size_t n = series.forces.size();
  detail::require(n >= 2, "amplitude_spectrum: need at least two samples");
  const double mean = std::accumulate(series.forces.begin(), series.forces.end(), 0.0) / static_cast<double>(n);

  std::vector<double> in(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = series.forces[i] - mean;
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::vector<double> amp(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) amp[k] = 2.0 * std::abs(out[k]) / static_cast<double>(n);
  return amp;
}

// Sum of amplitude-spectrum bins with f_lo <= f <= f_hi (DC never included).
inline double force_fft_band(const ForceSeries& series, double f_lo = 1.0, double f_hi = 13.0) {
  detail::require(f_lo > 0.0 && f_hi >= f_lo, "force_fft_band: need 0 < f_lo <= f_hi");
  series.validate();
  if (series.duration() < 1.0 / f_lo) {
    throw InvalidArgument("force_fft_band: series too short to resolve the lower band edge");
  }
  const std::vector<double> amp = amplitude_spectrum(series);
  const double bin_hz = series.sample_rate / static_cast<double>(series.forces.size());
  double sum = 0.0;
  for (std::size_t k = 1; k < amp.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= f_lo && f <= f_hi) sum += amp[k];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Episodes

// Force modulus after reset and after every step of one episode.
struct EpisodeLog {
  std::vector<double> forces;  // steps + 1 samples
  double dt = 0.02;
  int steps = 0;
  bool done = false;
  bool success = false;

  [[nodiscard]] ForceSeries series() const { return {forces, 1.0 / dt}; }
};

// Elapsed time at the success event; nullopt for a failed episode.
inline std::optional<double> execution_time(const EpisodeLog& log) {
  if (!log.done) throw InvalidArgument("execution_time: episode has not finished");
  if (!log.success) return std::nullopt;
  return log.steps * log.dt;
}

struct MetricsReport {
  double f_max = 0.0;   // N
  double f_i = 0.0;     // N s
  double f_fft = 0.0;
  std::optional<double> t_e;  // s, successful episodes only
  bool success = false;
};

// Episodes shorter than 1/f_lo are extended by holding the final force (the
// instrument resting where it stopped) so the spectral band stays defined.
inline MetricsReport episode_metrics(const EpisodeLog& log, double f_lo = 1.0, double f_hi = 13.0) {
  ForceSeries s = log.series();
  MetricsReport r;
  r.f_max = max_force(s);
  r.f_i = integral_force(s);
  const auto min_samples = static_cast<std::size_t>(std::ceil(s.sample_rate / f_lo - 1e-9));
  if (s.forces.size() < min_samples) s.forces.resize(min_samples, s.forces.back());
  r.f_fft = force_fft_band(s, f_lo, f_hi);
  r.t_e = execution_time(log);
  r.success = log.success;
  return r;
}

// ---------------------------------------------------------------------------
// Batch statistics

struct MetricSummary {
  double median = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};

// Linear-interpolation quantile of sorted data (p in [0, 1]).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  detail::require(!sorted.empty(), "quantile: empty data");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Median, sample standard deviation (0 for a single value) and quartiles.
inline MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

struct BatchSummary {
  MetricSummary f_max, f_i, f_fft, t_e;
  double success_rate = 0.0;
  std::size_t episodes = 0;
};

// Force metrics over all episodes, execution time over successful ones.
inline BatchSummary batch_report(const std::vector<MetricsReport>& reports) {
  detail::require(!reports.empty(), "batch_report: need at least one episode");
  std::vector<double> fmax, fi, ffft, te;
  std::size_t successes = 0;
  for (const MetricsReport& r : reports) {
    fmax.push_back(r.f_max);
    fi.push_back(r.f_i);
    ffft.push_back(r.f_fft);
    if (r.t_e) te.push_back(*r.t_e);
    if (r.success) ++successes;
  }
  BatchSummary b;
  b.f_max = summarize(fmax);
  b.f_i = summarize(fi);
  b.f_fft = summarize(ffft);
  b.t_e = summarize(te);
  b.episodes = reports.size();
  b.success_rate = static_cast<double>(successes) / static_cast<double>(reports.size());
  return b;
}

// ---------------------------------------------------------------------------
// Report file: tab-separated.
//
//   # canalrl-report label=<label>
//   episode_id  success  F_max  F_i  F_FFT  t_e        (t_e is "NA" on failure)
//   ... one row per episode ...
//   # summary
//   metric  median  sd  q1  q3  n
//   F_max|F_i|F_FFT|t_e rows
//   success_rate  <value>

struct EpisodeRow {
  std::uint64_t episode_id = 0;
  MetricsReport metrics;
};

struct MetricsFile {
  std::string label;
  std::vector<EpisodeRow> rows;

  [[nodiscard]] BatchSummary summary() const {
    std::vector<MetricsReport> m;
    m.reserve(rows.size());
    for (const auto& r : rows) m.push_back(r.metrics);
    return batch_report(m);
  }
};

namespace report_format {

inline std::string fmt(double v, int digits = 10) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

// Round-trip exact.
inline std::string fmt_exact(double v) { return fmt(v, 17); }

inline void write_summary_row(std::ostream& os, const char* name, const MetricSummary& s) {
  os << name << '\t' << fmt(s.median) << '\t' << fmt(s.sd) << '\t' << fmt(s.q1) << '\t' << fmt(s.q3) << '\t' << s.n
     << '\n';
}

}  // namespace report_format

inline void write_metrics_file(std::ostream& os, const MetricsFile& file) {
  using report_format::fmt;
  using report_format::fmt_exact;
  os << "# canalrl-report label=" << file.label << '\n';
  os << "episode_id\tsuccess\tF_max\tF_i\tF_FFT\tt_e\n";
  for (const EpisodeRow& r : file.rows) {
    os << r.episode_id << '\t' << (r.metrics.success ? 1 : 0) << '\t' << fmt_exact(r.metrics.f_max) << '\t'
       << fmt_exact(r.metrics.f_i) << '\t' << fmt_exact(r.metrics.f_fft) << '\t'
       << (r.metrics.t_e ? fmt_exact(*r.metrics.t_e) : std::string("NA")) << '\n';
  }
  const BatchSummary b = file.summary();
  os << "# summary\n";
  os << "metric\tmedian\tsd\tq1\tq3\tn\n";
  report_format::write_summary_row(os, "F_max", b.f_max);
  report_format::write_summary_row(os, "F_i", b.f_i);
  report_format::write_summary_row(os, "F_FFT", b.f_fft);
  report_format::write_summary_row(os, "t_e", b.t_e);
  os << "success_rate\t" << fmt(b.success_rate) << '\n';
}

// Reads the per-episode rows; the summary block is recomputed, not trusted.
inline MetricsFile read_metrics_file(std::istream& is, const std::string& name = "report") {
  MetricsFile file;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> ParseError {
    return ParseError(name + ":" + std::to_string(line_no) + ": " + why + ": '" + line + "'");
  };
  if (!std::getline(is, line) || line.rfind("# canalrl-report", 0) != 0) {
    line_no = 1;
    throw fail("missing '# canalrl-report' header");
  }
  line_no = 1;
  if (const auto pos = line.find("label="); pos != std::string::npos) file.label = line.substr(pos + 6);
  bool in_rows = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "# summary") {
      in_rows = false;
      continue;
    }
    if (!in_rows || line.rfind("episode_id", 0) == 0) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (std::getline(ls, t, '\t')) tok.push_back(t);
    if (tok.size() != 6) throw fail("expected 6 tab-separated fields");
    EpisodeRow row;
    try {
      std::size_t used = 0;
      row.episode_id = std::stoull(tok[0], &used);
      if (used != tok[0].size()) throw std::invalid_argument(tok[0]);
      if (tok[1] != "0" && tok[1] != "1") throw std::invalid_argument(tok[1]);
      row.metrics.success = tok[1] == "1";
      auto num = [](const std::string& s) {
        std::size_t u = 0;
        const double v = std::stod(s, &u);
        if (u != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
      };
      row.metrics.f_max = num(tok[2]);
      row.metrics.f_i = num(tok[3]);
      row.metrics.f_fft = num(tok[4]);
      if (tok[5] != "NA") row.metrics.t_e = num(tok[5]);
    } catch (const std::exception&) {
      throw fail("malformed episode row");
    }
    if (row.metrics.success != row.metrics.t_e.has_value()) throw fail("t_e must be given exactly for successes");
    file.rows.push_back(row);
  }
  if (file.rows.empty()) throw ParseError(name + ": no episode rows");
  return file;
}

}  // namespace canalrl
