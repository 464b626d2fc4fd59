#pragma once

#include <stdexcept>
#include <string>

namespace dtplace {

/// Malformed netlist text. Line and column are 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// A structurally invalid netlist, grid, config or dataset.
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested utilization or geometry cannot be realized.
class InfeasibleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Action at a cell the position mask forbids.
class IllegalActionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// No feasible anchor remains for the next macro.
class DeadEndError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable artifact on disk.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dtplace
