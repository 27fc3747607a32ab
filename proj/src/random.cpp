#include "fbsde/random.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

namespace fbsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53;
constexpr std::uint32_t kMul1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo)
{
    std::uint64_t const p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::operator()(Counter ctr) const noexcept
{
    Key key = key_;
    for (int round = 0; round < 10; ++round)
    {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

double normal_quantile(double p)
{
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

std::array<double, 2> keyed_normal_pair(Philox4x32 const& gen, std::uint64_t path,
                                        std::uint32_t step, std::uint32_t pair) noexcept
{
    auto const out = gen({pair, step, static_cast<std::uint32_t>(path),
                          static_cast<std::uint32_t>(path >> 32)});
    std::uint64_t const a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    std::uint64_t const b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    return {normal_quantile(bits_to_open_unit(a)), normal_quantile(bits_to_open_unit(b))};
}

double keyed_normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                    std::uint32_t component) noexcept
{
    auto const pair = keyed_normal_pair(Philox4x32(seed), path, step, component / 2);
    return pair[component % 2];
}

std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace fbsde
