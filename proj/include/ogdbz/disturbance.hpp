#pragma once

#include "ogdbz/linalg.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace ogdbz {

/// Independent, replayable stream seed derived from a run seed and a stream id.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline constexpr std::uint64_t kDisturbanceStream = 1;
inline constexpr std::uint64_t kCostStream = 2;

enum class DisturbanceKind { uniform, fixed, adversarial_sign };

const char* to_string(DisturbanceKind k);

/// Emits w_t for t = 0, 1, ... with ||w_t||_inf <= w_bar.
class DisturbanceSource {
public:
  /// i.i.d. uniform on the box [-w_bar, w_bar]^n.
  static DisturbanceSource uniform(int n, double w_bar, std::uint64_t seed);
  /// Replays `seq`, then zeros. Every entry must lie in the box.
  static DisturbanceSource fixed(std::vector<Vec> seq, double w_bar);
  /// w_t = w_bar * sign(direction(t)) entrywise, with sign(0) = +1.
  static DisturbanceSource adversarial_sign(int n, double w_bar, std::function<Vec(int)> direction);

  Vec next();
  int n() const { return n_; }
  double w_bar() const { return w_bar_; }
  DisturbanceKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

private:
  DisturbanceKind kind_ = DisturbanceKind::uniform;
  int n_ = 0;
  double w_bar_ = 0.0;
  std::uint64_t seed_ = 0;
  int t_ = 0;
  std::mt19937_64 rng_;
  std::vector<Vec> seq_;
  std::function<Vec(int)> direction_;
};

}  // namespace ogdbz
