#pragma once

// Scalar reference implementations. Each one follows the textbook definition
// with plain loops and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// (channel, row, column), column fastest.
struct Volume {
  long width = 0;
  long height = 0;
  long channels = 0;
  std::vector<double> values;

  double at(long c, long y, long x) const { return values[static_cast<std::size_t>((c * height + y) * width + x)]; }
  double& at(long c, long y, long x) { return values[static_cast<std::size_t>((c * height + y) * width + x)]; }
};

inline Volume random_volume(long width, long height, long channels, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Volume v{width, height, channels, std::vector<double>(static_cast<std::size_t>(width * height * channels))};
  for (auto& x : v.values) x = dist(rng);
  return v;
}

inline std::vector<double> average_pool(const Volume& v) {
  std::vector<double> out(static_cast<std::size_t>(v.channels), 0.0);
  for (long c = 0; c < v.channels; ++c) {
    double sum = 0.0;
    for (long y = 0; y < v.height; ++y) {
      for (long x = 0; x < v.width; ++x) sum += v.at(c, y, x);
    }
    out[static_cast<std::size_t>(c)] = sum / static_cast<double>(v.width * v.height);
  }
  return out;
}

inline std::vector<double> max_pool(const Volume& v) {
  std::vector<double> out(static_cast<std::size_t>(v.channels), -std::numeric_limits<double>::infinity());
  for (long c = 0; c < v.channels; ++c) {
    for (long y = 0; y < v.height; ++y) {
      for (long x = 0; x < v.width; ++x) {
        if (v.at(c, y, x) > out[static_cast<std::size_t>(c)]) out[static_cast<std::size_t>(c)] = v.at(c, y, x);
      }
    }
  }
  return out;
}

inline double euclidean_norm(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

// weights[o][c][ky][kx] flattened as ((o * in + c) * k + ky) * k + kx.
inline Volume convolve(const Volume& in, const std::vector<double>& weights, const std::vector<double>& bias,
                       long out_channels, long k, long stride, long pad) {
  Volume out;
  out.width = (in.width + 2 * pad - k) / stride + 1;
  out.height = (in.height + 2 * pad - k) / stride + 1;
  out.channels = out_channels;
  out.values.assign(static_cast<std::size_t>(out.width * out.height * out.channels), 0.0);
  for (long o = 0; o < out_channels; ++o) {
    for (long oy = 0; oy < out.height; ++oy) {
      for (long ox = 0; ox < out.width; ++ox) {
        double sum = bias[static_cast<std::size_t>(o)];
        for (long c = 0; c < in.channels; ++c) {
          for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx) {
              const long iy = oy * stride - pad + ky;
              const long ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
              sum += weights[static_cast<std::size_t>(((o * in.channels + c) * k + ky) * k + kx)] * in.at(c, iy, ix);
            }
          }
        }
        out.at(o, oy, ox) = sum;
      }
    }
  }
  return out;
}

// Padding cells never win.
inline Volume window_max(const Volume& in, long k, long stride, long pad) {
  Volume out;
  out.width = (in.width + 2 * pad - k) / stride + 1;
  out.height = (in.height + 2 * pad - k) / stride + 1;
  out.channels = in.channels;
  out.values.assign(static_cast<std::size_t>(out.width * out.height * out.channels), 0.0);
  for (long c = 0; c < in.channels; ++c) {
    for (long oy = 0; oy < out.height; ++oy) {
      for (long ox = 0; ox < out.width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        for (long ky = 0; ky < k; ++ky) {
          for (long kx = 0; kx < k; ++kx) {
            const long iy = oy * stride - pad + ky;
            const long ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
            best = std::max(best, in.at(c, iy, ix));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

// Half-pixel centres, coordinates clamped to the image.
inline double bilinear_sample(const Volume& in, long c, long out_w, long out_h, long x, long y) {
  auto source = [](long i, long n_in, long n_out, long& lo, long& hi) {
    double s = (i + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > n_in - 1) s = static_cast<double>(n_in - 1);
    lo = static_cast<long>(s);
    hi = lo + 1 < n_in ? lo + 1 : lo;
    return s - static_cast<double>(lo);
  };
  long x0, x1, y0, y1;
  const double fx = source(x, in.width, out_w, x0, x1);
  const double fy = source(y, in.height, out_h, y0, y1);
  return (1 - fy) * ((1 - fx) * in.at(c, y0, x0) + fx * in.at(c, y0, x1)) +
         fy * ((1 - fx) * in.at(c, y1, x0) + fx * in.at(c, y1, x1));
}

// Relevance flags in rank order.
inline double average_precision(const std::vector<bool>& hits, std::size_t relevant_count) {
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (hits[r]) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(r + 1);
    }
  }
  return relevant_count == 0 ? 0.0 : sum / static_cast<double>(relevant_count);
}

// Full ranking by (score desc, id asc) via pairwise selection.
inline std::vector<std::pair<std::string, double>> exhaustive_ranking(
    const std::vector<std::vector<double>>& rows, const std::vector<std::string>& ids,
    const std::vector<double>& query) {
  auto unit = [](std::vector<double> v) {
    const double n = euclidean_norm(v);
    if (n > 0) {
      for (auto& x : v) x /= n;
    }
    return v;
  };
  const auto q = unit(query);
  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = unit(rows[i]);
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * r[d];
    scored.push_back({ids[i], dot});
  }
  std::vector<std::pair<std::string, double>> out;
  std::vector<bool> used(scored.size(), false);
  for (std::size_t step = 0; step < scored.size(); ++step) {
    std::size_t best = scored.size();
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (used[i]) continue;
      if (best == scored.size() || scored[i].second > scored[best].second ||
          (scored[i].second == scored[best].second && scored[i].first < scored[best].first)) {
        best = i;
      }
    }
    used[best] = true;
    out.push_back(scored[best]);
  }
  return out;
}

// Size of the intersection of the first four ranked ids with the group.
inline int top4_intersection(const std::vector<std::string>& ranked, const std::vector<std::string>& group) {
  std::set<std::string> head(ranked.begin(), ranked.begin() + std::min<std::size_t>(4, ranked.size()));
  int hits = 0;
  for (const auto& g : group) hits += static_cast<int>(head.count(g));
  return hits;
}

}  // namespace oracle
