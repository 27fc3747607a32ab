#include "fbsde/paths.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/random.hpp"

namespace fbsde {

IncrementSet IncrementSet::generate(int steps, int dim_w, std::size_t paths, double h,
                                    std::uint64_t seed, Options const& options)
{
    if (steps < 1 || dim_w < 1 || paths < 1)
        throw InvalidArgument("generate_increments: n, d_w and paths must be >= 1");
    if (!(h > 0) || !std::isfinite(h))
        throw InvalidArgument("generate_increments: h must be positive");
    std::size_t const per_path = static_cast<std::size_t>(steps) * dim_w;
    if (paths > options.memory_budget_bytes / sizeof(double) / per_path)
    {
        std::ostringstream os;
        os << "generate_increments: " << paths << " x " << steps << " x " << dim_w
           << " doubles exceed the memory budget of " << options.memory_budget_bytes << " bytes";
        throw CapacityError(os.str());
    }

    IncrementSet set;
    set.steps_ = steps;
    set.dim_w_ = dim_w;
    set.paths_ = paths;
    set.h_ = h;
    set.seed_ = seed;
    set.data_.resize(paths * per_path);

    Philox4x32 const gen(seed);
    double const scale = std::sqrt(h);
    parallel_for(paths, options.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
        {
            double* out = set.data_.data() + p * per_path;
            for (int i = 1; i <= steps; ++i)
            {
                for (int k = 0; 2 * k < dim_w; ++k)
                {
                    auto const z = keyed_normal_pair(gen, p, static_cast<std::uint32_t>(i),
                                                     static_cast<std::uint32_t>(k));
                    out[2 * k] = scale * z[0];
                    if (2 * k + 1 < dim_w)
                        out[2 * k + 1] = scale * z[1];
                }
                out += dim_w;
            }
        }
    });
    return set;
}

IncrementSet IncrementSet::from_data(int steps, int dim_w, std::size_t paths, double h,
                                     std::vector<double> data, std::uint64_t seed)
{
    if (steps < 1 || dim_w < 1 || paths < 1)
        throw InvalidArgument("increments: n, d_w and paths must be >= 1");
    if (data.size() != paths * steps * static_cast<std::size_t>(dim_w))
        throw InvalidArgument("increments: data size does not match paths * n * d_w");
    IncrementSet set;
    set.steps_ = steps;
    set.dim_w_ = dim_w;
    set.paths_ = paths;
    set.h_ = h;
    set.seed_ = seed;
    set.data_ = std::move(data);
    return set;
}

PathEnsemble::PathEnsemble(int steps, int dim_x, std::size_t paths, int iteration)
    : steps_(steps), dim_x_(dim_x), paths_(paths), iteration_(iteration),
      states_(paths * (steps + 1) * static_cast<std::size_t>(dim_x))
{
}

PathEnsemble forward_paths(FbsdeProblem const& problem, Grid const& grid,
                           ValueEvaluator const& u_prev, IncrementSet const& increments,
                           int iteration, int workers)
{
    int const n = grid.steps();
    int const dx = problem.dim_x;
    int const dw = problem.dim_w;
    if (increments.steps() != n || increments.dim_w() != dw)
        throw InvalidArgument("forward_paths: increments do not match grid or dim_w");
    if (std::abs(increments.step_size() - grid.step_size()) >
        1e-12 * grid.step_size())
        throw InvalidArgument("forward_paths: increment step size differs from grid");

    double const h = grid.step_size();
    PathEnsemble out(n, dx, increments.paths(), iteration);

    parallel_for(increments.paths(), workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> drift(dx), diffusion(static_cast<std::size_t>(dx) * dw);
        for (std::size_t p = begin; p < end; ++p)
        {
            auto x0 = out.state(p, 0);
            std::copy(problem.x0.begin(), problem.x0.end(), x0.begin());
            for (int i = 0; i < n; ++i)
            {
                auto const x = out.state(p, i);
                auto next = out.state(p, i + 1);
                double const t = grid.time(i);
                double const y = u_prev(i, x);
                problem.drift(t, x, y, drift);
                problem.diffusion(t, x, y, diffusion);
                auto const dW = increments.at(p, i + 1);
                bool finite = true;
                for (int d = 0; d < dx; ++d)
                {
                    double v = x[d] + drift[d] * h;
                    for (int q = 0; q < dw; ++q)
                        v += diffusion[d * dw + q] * dW[q];
                    next[d] = v;
                    finite = finite && std::isfinite(v);
                }
                if (!finite)
                {
                    std::ostringstream os;
                    os << "forward pass blew up: non-finite state on path " << p << " at step "
                       << i + 1 << " (iteration " << iteration << ")";
                    throw BlowUp(os.str(), static_cast<long>(p), i + 1);
                }
            }
        }
    });
    return out;
}

//---------------------------------------------------------------------------//
// Binary dump
//---------------------------------------------------------------------------//
namespace {

constexpr char kMagic[8] = {'F', 'B', 'S', 'D', 'E', 'P', 'T', 'H'};

template<class U>
void put_le(std::ostream& os, U value)
{
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    os.write(buf, sizeof(U));
}

template<class U>
U get_le(std::istream& is)
{
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U)))
        throw Error("ensemble dump: truncated file");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        value |= static_cast<U>(buf[i]) << (8 * i);
    return value;
}

}  // namespace

void write_ensemble(std::filesystem::path const& file, PathEnsemble const& ensemble,
                    IncrementSet const& increments)
{
    std::ofstream os(file, std::ios::binary);
    if (!os)
        throw Error("cannot open '" + file.string() + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(os, kEnsembleFormatVersion);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ensemble.steps()));
    put_le<std::uint64_t>(os, ensemble.paths());
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ensemble.dim_x()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(increments.dim_w()));
    put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(increments.step_size()));
    put_le<std::uint64_t>(os, increments.seed());
    for (double v : ensemble.data())
        put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os)
        throw Error("write to '" + file.string() + "' failed");
}

EnsembleDump read_ensemble(std::filesystem::path const& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is)
        throw Error("cannot open '" + file.string() + "' for reading");
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error("'" + file.string() + "' is not an ensemble dump");
    if (get_le<std::uint32_t>(is) != kEnsembleFormatVersion)
        throw Error("'" + file.string() + "': unsupported dump version");
    EnsembleDump d;
    d.steps = get_le<std::uint64_t>(is);
    d.paths = get_le<std::uint64_t>(is);
    d.dim_x = get_le<std::uint64_t>(is);
    d.dim_w = get_le<std::uint64_t>(is);
    d.h = std::bit_cast<double>(get_le<std::uint64_t>(is));
    d.seed = get_le<std::uint64_t>(is);
    d.states.resize(d.paths * (d.steps + 1) * d.dim_x);
    for (auto& v : d.states)
        v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    return d;
}

}  // namespace fbsde
