#include "krew/ctgan/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "krew/error.hpp"

namespace krew::ctgan {

namespace {

constexpr double kAlphaLimit = 0.99;

double log_density(double x, double mean, double std, double weight) {
  const double z = (x - mean) / std;
  return std::log(weight) - std::log(std) - 0.5 * z * z;
}

// Mode chosen for x: highest posterior unless its alpha leaves the usable
// range, then the mode with the smallest |alpha|.
std::size_t pick_mode(const ColumnTransform& t, double x) {
  std::size_t best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.modes(); ++k) {
    const double lp = log_density(x, t.means[k], t.stds[k], t.weights[k]);
    if (lp > best_lp) {
      best_lp = lp;
      best = k;
    }
  }
  if (std::abs(x - t.means[best]) / (4.0 * t.stds[best]) <= kAlphaLimit) return best;
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.modes(); ++k) {
    const double a = std::abs(x - t.means[k]) / (4.0 * t.stds[k]);
    if (a < smallest) {
      smallest = a;
      best = k;
    }
  }
  return best;
}

Eigen::Index argmax_segment(const Eigen::MatrixXd& m, Eigen::Index row, std::size_t start,
                            std::size_t width) {
  Eigen::Index best = 0;
  m.row(row).segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(width)).maxCoeff(&best);
  return best;
}

int category_of(const ColumnTransform& t, const Eigen::MatrixXd& encoded, Eigen::Index r) {
  if (t.kind == SlotKind::OneHotGroup) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.source.size(); ++i) {
      const double v = encoded(r, static_cast<Eigen::Index>(t.source[i]));
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    return static_cast<int>(best);
  }
  const double v = encoded(r, static_cast<Eigen::Index>(t.source.front()));
  const auto it = std::lower_bound(t.values.begin(), t.values.end(), v);
  if (it == t.values.end() || *it != v)
    throw ConsistencyError("value " + format_double(v) + " of column '" + t.name +
                           "' is not a known category");
  return static_cast<int>(it - t.values.begin());
}

}  // namespace

Mixture fit_mixture(const std::vector<double>& x, const GmmOptions& options) {
  if (x.empty()) throw ParameterError("cannot fit a mixture to an empty column");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(
      std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (var <= 0.0 || distinct < 2) return Mixture{{mean}, {1.0}, {1.0}};

  std::vector<double> all = x;
  std::sort(all.begin(), all.end());
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(options.max_modes), distinct);
  const double overall_std = std::sqrt(var);
  const double floor_std = 1e-3 * overall_std;

  Mixture m;
  for (std::size_t i = 0; i < k; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    m.means.push_back(all[static_cast<std::size_t>(q * (n - 1.0))]);
    m.stds.push_back(overall_std / static_cast<double>(k));
    m.weights.push_back(1.0 / static_cast<double>(k));
  }

  Eigen::MatrixXd resp(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(k));
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    double loglik = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double lp = log_density(x[r], m.means[j], m.stds[j], m.weights[j]);
        resp(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = lp;
        top = std::max(top, lp);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        auto& cell = resp(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        cell = std::exp(cell - top);
        total += cell;
      }
      resp.row(static_cast<Eigen::Index>(r)) /= total;
      loglik += top + std::log(total);
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = resp.col(static_cast<Eigen::Index>(j));
      const double nk = col.sum();
      if (nk <= 1e-12) {
        m.weights[j] = 0.0;
        continue;
      }
      double mu = 0.0;
      for (std::size_t r = 0; r < x.size(); ++r) mu += col(static_cast<Eigen::Index>(r)) * x[r];
      mu /= nk;
      double s2 = 0.0;
      for (std::size_t r = 0; r < x.size(); ++r)
        s2 += col(static_cast<Eigen::Index>(r)) * (x[r] - mu) * (x[r] - mu);
      m.means[j] = mu;
      m.stds[j] = std::max(std::sqrt(s2 / nk), floor_std);
      m.weights[j] = nk / n;
    }
    // Starved modes keep a tiny weight so the log stays finite; they are
    // dropped below.
    for (auto& w : m.weights) w = std::max(w, 1e-300);
    if (loglik - previous < options.tolerance * n) break;
    previous = loglik;
  }

  Mixture kept;
  for (std::size_t j = 0; j < k; ++j) {
    if (m.weights[j] < options.min_weight) continue;
    kept.means.push_back(m.means[j]);
    kept.stds.push_back(m.stds[j]);
    kept.weights.push_back(m.weights[j]);
  }
  const double total = std::accumulate(kept.weights.begin(), kept.weights.end(), 0.0);
  for (auto& w : kept.weights) w /= total;
  return kept;
}

TransformSpec::TransformSpec(std::vector<ColumnTransform> columns, std::size_t encoded_width)
    : columns_(std::move(columns)), encoded_width_(encoded_width) {
  auto segments = std::make_shared<ad::Segments>();
  std::vector<char> alpha;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    auto& t = columns_[i];
    for (auto s : t.source)
      if (s >= encoded_width_) throw ConsistencyError("transform '" + t.name + "' reads past the table");
    t.output_offset = output_width_;
    if (t.kind == SlotKind::Continuous) {
      if (t.modes() == 0 || t.stds.size() != t.modes() || t.weights.size() != t.modes())
        throw ConsistencyError("continuous transform '" + t.name + "' has no valid modes");
      t.output_width = 1 + t.modes();
      segments->push_back({static_cast<int>(output_width_)});
      alpha.push_back(1);
      std::vector<int> group;
      for (std::size_t k = 0; k < t.modes(); ++k) {
        group.push_back(static_cast<int>(output_width_ + 1 + k));
        alpha.push_back(0);
      }
      segments->push_back(std::move(group));
    } else {
      if (t.categories() == 0) throw ConsistencyError("discrete transform '" + t.name + "' is empty");
      if (t.kind == SlotKind::Discrete && t.values.size() != t.categories())
        throw ConsistencyError("discrete transform '" + t.name + "' has mismatched categories");
      if (t.kind == SlotKind::OneHotGroup && t.source.size() != t.categories())
        throw ConsistencyError("one-hot transform '" + t.name + "' has mismatched categories");
      t.output_width = t.categories();
      t.cond_offset = cond_width_;
      cond_width_ += t.categories();
      discrete_.push_back(i);
      std::vector<int> group;
      for (std::size_t k = 0; k < t.categories(); ++k) {
        group.push_back(static_cast<int>(output_width_ + k));
        alpha.push_back(0);
      }
      segments->push_back(std::move(group));
    }
    output_width_ += t.output_width;
  }
  segments_ = std::move(segments);
  Eigen::MatrixXd am(1, static_cast<Eigen::Index>(output_width_));
  for (std::size_t c = 0; c < alpha.size(); ++c) am(0, static_cast<Eigen::Index>(c)) = alpha[c];
  alpha_mask_ = std::make_shared<const Eigen::MatrixXd>(am);
  softmax_mask_ = std::make_shared<const Eigen::MatrixXd>((1.0 - am.array()).matrix());
}

Eigen::MatrixXd TransformSpec::forward(const Eigen::MatrixXd& encoded) const {
  if (static_cast<std::size_t>(encoded.cols()) != encoded_width_)
    throw ConsistencyError("encoded width " + std::to_string(encoded.cols()) + " does not match " +
                           std::to_string(encoded_width_));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(encoded.rows(), static_cast<Eigen::Index>(output_width_));
  for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
    for (const auto& t : columns_) {
      const auto off = static_cast<Eigen::Index>(t.output_offset);
      if (t.kind == SlotKind::Continuous) {
        const double x = encoded(r, static_cast<Eigen::Index>(t.source.front()));
        const std::size_t k = pick_mode(t, x);
        out(r, off) = std::clamp((x - t.means[k]) / (4.0 * t.stds[k]), -1.0, 1.0);
        out(r, off + 1 + static_cast<Eigen::Index>(k)) = 1.0;
      } else {
        out(r, off + category_of(t, encoded, r)) = 1.0;
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> TransformSpec::categories_of(const Eigen::MatrixXd& encoded) const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(encoded.rows()));
  for (Eigen::Index r = 0; r < encoded.rows(); ++r)
    for (auto i : discrete_) out[static_cast<std::size_t>(r)].push_back(category_of(columns_[i], encoded, r));
  return out;
}

Eigen::MatrixXd TransformSpec::inverse(const Eigen::MatrixXd& transformed) const {
  if (static_cast<std::size_t>(transformed.cols()) != output_width_)
    throw ConsistencyError("transformed width " + std::to_string(transformed.cols()) +
                           " does not match " + std::to_string(output_width_));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(transformed.rows(), static_cast<Eigen::Index>(encoded_width_));
  for (Eigen::Index r = 0; r < transformed.rows(); ++r) {
    for (const auto& t : columns_) {
      switch (t.kind) {
        case SlotKind::Continuous: {
          const double alpha = std::clamp(transformed(r, static_cast<Eigen::Index>(t.output_offset)), -1.0, 1.0);
          const auto k = static_cast<std::size_t>(argmax_segment(transformed, r, t.output_offset + 1, t.modes()));
          out(r, static_cast<Eigen::Index>(t.source.front())) = alpha * 4.0 * t.stds[k] + t.means[k];
          break;
        }
        case SlotKind::Discrete: {
          const auto k = static_cast<std::size_t>(argmax_segment(transformed, r, t.output_offset, t.categories()));
          out(r, static_cast<Eigen::Index>(t.source.front())) = t.values[k];
          break;
        }
        case SlotKind::OneHotGroup: {
          const auto k = static_cast<std::size_t>(argmax_segment(transformed, r, t.output_offset, t.categories()));
          out(r, static_cast<Eigen::Index>(t.source[k])) = 1.0;
          break;
        }
      }
    }
  }
  return out;
}

std::string TransformSpec::to_json() const {
  using nlohmann::json;
  json cols = json::array();
  for (const auto& t : columns_) {
    json c;
    c["name"] = t.name;
    c["kind"] = t.kind == SlotKind::Continuous ? "continuous"
                : t.kind == SlotKind::Discrete ? "discrete"
                                               : "one-hot-group";
    c["source"] = t.source;
    c["means"] = t.means;
    c["stds"] = t.stds;
    c["weights"] = t.weights;
    c["values"] = t.values;
    c["frequencies"] = t.frequencies;
    cols.push_back(std::move(c));
  }
  json doc;
  doc["encoded_width"] = encoded_width_;
  doc["columns"] = std::move(cols);
  return doc.dump(1);
}

TransformSpec TransformSpec::from_json(const std::string& text) {
  using nlohmann::json;
  try {
    const json doc = json::parse(text);
    std::vector<ColumnTransform> cols;
    for (const auto& c : doc.at("columns")) {
      ColumnTransform t;
      t.name = c.at("name").get<std::string>();
      const auto kind = c.at("kind").get<std::string>();
      if (kind == "continuous")
        t.kind = SlotKind::Continuous;
      else if (kind == "discrete")
        t.kind = SlotKind::Discrete;
      else if (kind == "one-hot-group")
        t.kind = SlotKind::OneHotGroup;
      else
        throw ParseError("unknown transform kind '" + kind + "'");
      t.source = c.at("source").get<std::vector<std::size_t>>();
      t.means = c.at("means").get<std::vector<double>>();
      t.stds = c.at("stds").get<std::vector<double>>();
      t.weights = c.at("weights").get<std::vector<double>>();
      t.values = c.at("values").get<std::vector<double>>();
      t.frequencies = c.at("frequencies").get<std::vector<std::size_t>>();
      cols.push_back(std::move(t));
    }
    return TransformSpec(std::move(cols), doc.at("encoded_width").get<std::size_t>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed transform spec: ") + e.what());
  }
}

TransformSpec fit_transforms(const EncodedTable& encoded, const GmmOptions& options) {
  if (encoded.rows() == 0) throw ParameterError("cannot fit transforms to an empty table");
  const auto n = static_cast<Eigen::Index>(encoded.rows());
  std::vector<ColumnTransform> cols;
  std::optional<std::size_t> group;
  for (std::size_t c = 0; c < encoded.width(); ++c) {
    const auto& ec = encoded.columns[c];
    const auto column = encoded.values.col(static_cast<Eigen::Index>(c));
    if (encoded.kind == EncoderKind::OneHot && ec.origin == ColumnOrigin::SkillsetDerived) {
      if (!group) {
        ColumnTransform t;
        t.kind = SlotKind::OneHotGroup;
        t.name = encoded.source_schema.wordset_name();
        group = cols.size();
        cols.push_back(std::move(t));
      }
      cols[*group].source.push_back(c);
      cols[*group].frequencies.push_back(0);
      continue;
    }
    ColumnTransform t;
    t.name = ec.name;
    t.source = {c};
    if (ec.continuous) {
      t.kind = SlotKind::Continuous;
      const std::vector<double> x(column.data(), column.data() + n);
      Mixture m = fit_mixture(x, options);
      // Widen modes until every training value has a mode with |alpha| <= 0.99,
      // so forward/inverse round-trips without clipping.
      for (double v : x) {
        std::size_t best = 0;
        double smallest = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m.means.size(); ++k) {
          const double a = std::abs(v - m.means[k]) / (4.0 * m.stds[k]);
          if (a < smallest) {
            smallest = a;
            best = k;
          }
        }
        if (smallest > kAlphaLimit) m.stds[best] = std::abs(v - m.means[best]) / (4.0 * kAlphaLimit);
      }
      t.means = std::move(m.means);
      t.stds = std::move(m.stds);
      t.weights = std::move(m.weights);
    } else {
      t.kind = SlotKind::Discrete;
      t.values.assign(column.data(), column.data() + n);
      std::sort(t.values.begin(), t.values.end());
      t.values.erase(std::unique(t.values.begin(), t.values.end()), t.values.end());
      t.frequencies.assign(t.values.size(), 0);
    }
    cols.push_back(std::move(t));
  }
  for (auto& t : cols) {
    if (t.kind == SlotKind::Continuous) continue;
    for (Eigen::Index r = 0; r < n; ++r) ++t.frequencies[static_cast<std::size_t>(category_of(t, encoded.values, r))];
  }
  return TransformSpec(std::move(cols), encoded.width());
}

}  // namespace krew::ctgan
