#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates a documented precondition.
class InvalidArgument : public Error
{
  public:
    using Error::Error;
};

/// A requested allocation exceeds the configured memory budget.
class CapacityError : public Error
{
  public:
    using Error::Error;
};

/// The lambda step schedule has no positive lambda3 for this step size.
class ScheduleInfeasible : public Error
{
  public:
    ScheduleInfeasible(std::string const& what, double max_step)
        : Error(what), max_step_(max_step)
    {
    }

    /// Largest step size for which the schedule is feasible.
    double max_feasible_step() const noexcept { return max_step_; }

  private:
    double max_step_;
};

/// A simulated state or regression target became non-finite.
class BlowUp : public Error
{
  public:
    BlowUp(std::string const& what, long path, long step)
        : Error(what), path_(path), step_(step)
    {
    }

    long path() const noexcept { return path_; }
    long step() const noexcept { return step_; }

  private:
    long path_;
    long step_;
};

/// A fixed-point loop hit its iteration cap.
class NonConvergence : public Error
{
  public:
    NonConvergence(std::string const& what, double last_change)
        : Error(what), last_change_(last_change)
    {
    }

    double last_change() const noexcept { return last_change_; }

  private:
    double last_change_;
};

}  // namespace fbsde
