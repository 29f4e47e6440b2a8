#pragma once

// Slicing domain model: requests, the rate model, and the resource-block pool.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slicejam/error.hpp"
#include "slicejam/rng.hpp"

namespace slicejam {

// Set of resource-block indices; bit k set means RB k is a member.
using RbMask = std::uint32_t;
inline constexpr int kMaxPoolRbs = 32;

inline RbMask full_mask(int rbs) {
  return rbs >= 32 ? ~RbMask{0} : ((RbMask{1} << rbs) - 1);
}
inline int popcount(RbMask m) { return std::popcount(m); }
inline bool contains(RbMask m, int rb) { return (m >> rb) & 1u; }
inline int lowest_rb(RbMask m) { return std::countr_zero(m); }

inline std::vector<int> rb_indices(RbMask m) {
  std::vector<int> out;
  for (int k = 0; m != 0; ++k, m >>= 1)
    if (m & 1u) out.push_back(k);
  return out;
}

inline RbMask mask_of(std::initializer_list<int> rbs) {
  RbMask m = 0;
  for (int k : rbs) m |= RbMask{1} << k;
  return m;
}

struct Request {
  int ue_id = 0;
  std::int64_t req_id = 0;
  int weight = 1;          // priority, 1..5
  double min_rate = 0.0;   // bps
  int lifetime = 1;        // slots
  std::int64_t deadline_slot = 0;
  std::int64_t arrival_slot = 0;
  double snr = 1.0;        // linear
  int rbs = 1;             // RBs needed, filled in at arrival from the rate model

  bool grantable_at(std::int64_t t) const { return arrival_slot <= t && t <= deadline_slot; }
};

// Gaussian tail function Q(x) = P(N(0,1) > x).
inline double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Uncoded QPSK bit error rate over AWGN, clamped to [0, 0.5].
inline double qpsk_ber(double snr) {
  return std::clamp(gaussian_tail(std::sqrt(2.0 * snr)), 0.0, 0.5);
}

struct RateModel {
  double c = 12.59e6;   // bps for one carrier over the whole band
  int carriers = 1;
  std::function<double(double)> ber_curve = qpsk_ber;
};

// D = c * K * (1 - BER(snr)).
inline double achievable_rate(double snr, const RateModel& model) {
  if (!(snr > 0.0)) throw DomainError("achievable_rate: snr must be positive");
  const double ber = model.ber_curve(snr);
  return model.c * model.carriers * (1.0 - ber);
}

// Rate delivered by one RB when the band is split evenly into `total_rbs` blocks.
inline double per_rb_rate(double snr, const RateModel& model, int total_rbs) {
  return achievable_rate(snr, model) / total_rbs;
}

// Smallest n with n * per_rb >= min_rate.
inline int rbs_needed(const Request& request, double per_rb) {
  if (!(per_rb > 0.0)) throw DomainError("rbs_needed: per-RB rate must be positive");
  const double ratio = request.min_rate / per_rb;
  auto n = static_cast<int>(std::ceil(ratio));
  // guard against ceil landing one short/over through rounding in the division
  if (n * per_rb < request.min_rate) ++n;
  if (n > 1 && (n - 1) * per_rb >= request.min_rate) --n;
  return std::max(n, 1);
}

struct IntRange {
  int lo = 0;
  int hi = 0;
};
struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct ScenarioParams {
  int ue_count = 30;
  double arrival_prob = 0.05;
  IntRange weight{1, 5};
  IntRange lifetime{1, 10};
  IntRange deadline_offset{1, 20};   // slots the request may wait, counting the arrival slot
  RealRange snr{1.5, 3.0};
  RealRange min_rate{0.5e6, 2.0e6};  // bps
  double bandwidth_hz = 10e6;
  int rbs = 11;
  RateModel rate{};

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (ue_count < 0) fail("ue_count must be >= 0");
    if (!(arrival_prob >= 0.0 && arrival_prob <= 1.0)) fail("arrival_prob must be in [0,1]");
    if (weight.lo < 1 || weight.hi > 5 || weight.lo > weight.hi) fail("weight range must lie in [1,5]");
    if (lifetime.lo < 1 || lifetime.lo > lifetime.hi) fail("lifetime range must be non-empty and >= 1");
    if (deadline_offset.lo < 1 || deadline_offset.lo > deadline_offset.hi)
      fail("deadline range must be non-empty and >= 1");
    if (!(snr.lo > 0.0) || snr.lo > snr.hi) fail("snr range must be non-empty and positive");
    if (!(min_rate.lo > 0.0) || min_rate.lo > min_rate.hi) fail("min_rate range must be non-empty and positive");
    if (rbs < 1 || rbs > kMaxPoolRbs) fail("rbs must be in [1,32]");
    if (!(rate.c > 0.0) || rate.carriers < 1) fail("rate model needs c > 0 and carriers >= 1");
    if (max_request_rbs() > rbs) fail("largest request needs more RBs than the pool holds");
  }

  // Largest RB count any request can need: highest demand at the lowest SNR.
  int max_request_rbs() const {
    Request worst;
    worst.min_rate = min_rate.hi;
    return rbs_needed(worst, per_rb_rate(snr.lo, rate, rbs));
  }
};

// One Bernoulli(p) trial per UE; field values are uniform over the configured ranges.
inline std::vector<Request> generate_arrivals(Rng& rng, std::int64_t t, const ScenarioParams& params) {
  params.validate();
  std::vector<Request> out;
  for (int ue = 0; ue < params.ue_count; ++ue) {
    if (!(uniform01(rng) < params.arrival_prob)) continue;
    Request r;
    r.ue_id = ue;
    r.req_id = t * params.ue_count + ue;
    r.arrival_slot = t;
    r.weight = uniform_int(rng, params.weight.lo, params.weight.hi);
    r.lifetime = uniform_int(rng, params.lifetime.lo, params.lifetime.hi);
    r.deadline_slot = t + uniform_int(rng, params.deadline_offset.lo, params.deadline_offset.hi) - 1;
    r.snr = std::uniform_real_distribution<double>(params.snr.lo, params.snr.hi)(rng);
    r.min_rate = std::uniform_real_distribution<double>(params.min_rate.lo, params.min_rate.hi)(rng);
    r.rbs = rbs_needed(r, per_rb_rate(r.snr, params.rate, params.rbs));
    out.push_back(r);
  }
  return out;
}

struct ActiveService {
  Request request;
  RbMask rb_set = 0;
  std::int64_t grant_slot = 0;
  std::int64_t end_slot = 0;  // last slot of service, grant_slot + lifetime - 1
};

class RbPool {
 public:
  explicit RbPool(int total_rbs) : total_(total_rbs), available_(full_mask(total_rbs)) {
    if (total_rbs < 1 || total_rbs > kMaxPoolRbs) throw ConfigError("RbPool: total RBs must be in [1,32]");
  }

  int total_rbs() const { return total_; }
  RbMask available() const { return available_; }
  RbMask occupied() const { return ~available_ & full_mask(total_); }
  int free_count() const { return popcount(available_); }
  const std::vector<ActiveService>& services() const { return services_; }

  void grant(ActiveService service) {
    if (service.rb_set == 0 || (service.rb_set & ~available_) != 0)
      throw InternalError("RbPool::grant: RB set is empty or not free");
    if (service.end_slot < service.grant_slot) throw InternalError("RbPool::grant: service ends before it starts");
    available_ &= ~service.rb_set;
    services_.push_back(std::move(service));
  }

  // Removes the service granted to `req_id` at `grant_slot` and frees its RBs.
  RbMask revoke(std::int64_t req_id, std::int64_t grant_slot) {
    auto it = std::find_if(services_.begin(), services_.end(), [&](const ActiveService& s) {
      return s.request.req_id == req_id && s.grant_slot == grant_slot;
    });
    if (it == services_.end()) throw InternalError("RbPool::revoke: no such service");
    const RbMask rbs = it->rb_set;
    available_ |= rbs;
    services_.erase(it);
    return rbs;
  }

  // Releases every service whose last slot is before t.
  RbMask release_expired(std::int64_t t) {
    RbMask released = 0;
    std::erase_if(services_, [&](const ActiveService& s) {
      if (s.end_slot >= t) return false;
      released |= s.rb_set;
      return true;
    });
    available_ |= released;
    return released;
  }

  bool invariants_hold() const {
    RbMask held = 0;
    int held_count = 0;
    for (const auto& s : services_) {
      if (s.rb_set == 0 || (held & s.rb_set) != 0) return false;
      held |= s.rb_set;
      held_count += popcount(s.rb_set);
    }
    if ((held & available_) != 0) return false;
    if ((held | available_) != full_mask(total_)) return false;
    return popcount(available_) + held_count == total_;
  }

  void check_invariants() const {
    if (!invariants_hold()) {
      std::ostringstream os;
      os << "RbPool invariant violated: free=" << free_count() << " services=" << services_.size();
      throw InternalError(os.str());
    }
  }

 private:
  int total_;
  RbMask available_;
  std::vector<ActiveService> services_;
};

struct PoolStep {
  RbMask released = 0;
  RbPool pool;
};

inline PoolStep step_pool(RbPool pool, std::int64_t t) {
  pool.check_invariants();
  const RbMask released = pool.release_expired(t);
  return {released, std::move(pool)};
}

}  // namespace slicejam
