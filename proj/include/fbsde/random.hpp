#pragma once

#include <array>
#include <cstdint>

namespace fbsde {

/*!
 * Philox4x32-10 counter-based generator.
 *
 * Stateless: the output block is a pure function of (key, counter), so any
 * draw can be computed without generating the ones before it.
 */
class Philox4x32
{
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
    {
    }

    explicit Philox4x32(Key key) noexcept : key_(key) {}

    Counter operator()(Counter ctr) const noexcept;

  private:
    Key key_;
};

/// Map 64 random bits to the open interval (0, 1) with 53-bit resolution.
inline double bits_to_open_unit(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Standard normal quantile.
double normal_quantile(double p);

/*!
 * Standard normal draw keyed on (seed, path, step, component).
 *
 * Each Philox block serves the component pair (2k, 2k+1) of one
 * (path, step); draws are obtained by inverse-CDF transform.
 */
double keyed_normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                    std::uint32_t component) noexcept;

/// Two consecutive normals (components 2k and 2k+1) from one block.
std::array<double, 2> keyed_normal_pair(Philox4x32 const& gen, std::uint64_t path,
                                        std::uint32_t step, std::uint32_t pair) noexcept;

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

}  // namespace fbsde
