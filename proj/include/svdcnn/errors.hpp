#pragma once

#include <stdexcept>
#include <string>

namespace svdcnn {

// Extents of two operands disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An index (character id, class id, reference row) is not in its table.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation invoked in the wrong lifecycle state (consumed tape, missing grad,
// degenerate batch statistics).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t op_index)
      : std::runtime_error(what), op_index_(op_index) {}
  std::size_t op_index() const noexcept { return op_index_; }

 private:
  std::size_t op_index_;
};

class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training hit a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, std::size_t batch, double loss)
      : std::runtime_error(what), epoch_(epoch), batch_(batch), loss_(loss) {}
  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }
  double loss() const noexcept { return loss_; }

 private:
  int epoch_;
  std::size_t batch_;
  double loss_;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, bad_spec, truncated, length_mismatch, trailing_data };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace svdcnn
