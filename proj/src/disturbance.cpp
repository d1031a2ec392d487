#include "ogdbz/disturbance.hpp"

#include <array>
#include <cmath>

namespace ogdbz {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

const char* to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::uniform: return "uniform";
    case DisturbanceKind::fixed: return "fixed";
    case DisturbanceKind::adversarial_sign: return "adversarial_sign";
  }
  return "unknown";
}

DisturbanceSource DisturbanceSource::uniform(int n, double w_bar, std::uint64_t seed) {
  require(n >= 1, "DisturbanceSource: n must be >= 1");
  require(std::isfinite(w_bar) && w_bar >= 0.0, "DisturbanceSource: w_bar must be finite and >= 0");
  DisturbanceSource s;
  s.kind_ = DisturbanceKind::uniform;
  s.n_ = n;
  s.w_bar_ = w_bar;
  s.seed_ = seed;
  s.rng_.seed(derive_seed(seed, kDisturbanceStream));
  return s;
}

DisturbanceSource DisturbanceSource::fixed(std::vector<Vec> seq, double w_bar) {
  require(!seq.empty(), "DisturbanceSource::fixed: empty sequence");
  DisturbanceSource s;
  s.kind_ = DisturbanceKind::fixed;
  s.n_ = static_cast<int>(seq.front().size());
  s.w_bar_ = w_bar;
  for (const auto& w : seq) {
    require(w.size() == s.n_, "DisturbanceSource::fixed: inconsistent dimensions");
    require(w.cwiseAbs().maxCoeff() <= w_bar, "DisturbanceSource::fixed: sample outside the box");
  }
  s.seq_ = std::move(seq);
  return s;
}

DisturbanceSource DisturbanceSource::adversarial_sign(int n, double w_bar,
                                                      std::function<Vec(int)> direction) {
  require(n >= 1 && static_cast<bool>(direction), "DisturbanceSource::adversarial_sign: bad arguments");
  DisturbanceSource s;
  s.kind_ = DisturbanceKind::adversarial_sign;
  s.n_ = n;
  s.w_bar_ = w_bar;
  s.direction_ = std::move(direction);
  return s;
}

Vec DisturbanceSource::next() {
  Vec w(n_);
  switch (kind_) {
    case DisturbanceKind::uniform: {
      std::uniform_real_distribution<double> U(-w_bar_, w_bar_);
      for (int i = 0; i < n_; ++i) w(i) = w_bar_ > 0.0 ? U(rng_) : 0.0;
      break;
    }
    case DisturbanceKind::fixed:
      w = t_ < static_cast<int>(seq_.size()) ? seq_[t_] : Vec::Zero(n_);
      break;
    case DisturbanceKind::adversarial_sign: {
      const Vec d = direction_(t_);
      require(d.size() == n_, "adversarial direction has the wrong dimension");
      for (int i = 0; i < n_; ++i) w(i) = d(i) >= 0.0 ? w_bar_ : -w_bar_;
      break;
    }
  }
  require(w.cwiseAbs().maxCoeff() <= w_bar_, "disturbance sample outside the admissible box");
  ++t_;
  return w;
}

}  // namespace ogdbz
