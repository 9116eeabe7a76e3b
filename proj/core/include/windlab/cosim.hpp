#pragma once
// Framed wire protocol decoupling the environment from a simulator process:
// per-step measure frames in, command frames out, lock-step, with a window-
// averaged free-stream estimator on the consumer side.
//
// Byte format (the bit-exact contract of this module):
//   magic "WFCB" | version u8 = 1 | type u8 (1 measure, 2 command) |
//   M u16 LE | step u64 LE | payload of little-endian 64-bit floats
//   (12 per turbine for measures, 3 for commands) | CRC32 of header+payload.

#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "windlab/dynsim.hpp"

namespace windlab {

inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 16;  // magic+version+type+M+step

enum class FrameType : std::uint8_t { kMeasure = 1, kCommand = 2 };

struct MeasureFrame {
  std::uint64_t step = 0;
  std::vector<TurbineMeasures> measures;
};

struct CommandFrame {
  std::uint64_t step = 0;
  std::vector<TurbineCommand> commands;
};

// CRC-32 (reflected, polynomial 0xEDB88320, init/final-xor 0xFFFFFFFF);
// crc32 over "123456789" is 0xCBF43926.
std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

enum class DecodeErrorCode {
  kTruncated,
  kBadMagic,
  kBadVersion,
  kBadType,
  kBadLength,
  kBadCrc,
};
const char* to_string(DecodeErrorCode code);

class FrameDecodeError : public std::runtime_error {
 public:
  FrameDecodeError(DecodeErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  DecodeErrorCode code() const { return code_; }

 private:
  DecodeErrorCode code_;
};

// Lock-step violations (out-of-order or stale step indices, count mismatches).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode(const MeasureFrame& frame);
std::vector<std::uint8_t> encode(const CommandFrame& frame);

FrameType peek_frame_type(const std::vector<std::uint8_t>& bytes);
MeasureFrame decode_measure(const std::vector<std::uint8_t>& bytes);
CommandFrame decode_command(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------
// Transports: blocking whole-frame send/receive with a timeout.

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TransportTimeout : public TransportError {
 public:
  using TransportError::TransportError;
};
class TransportClosed : public TransportError {
 public:
  using TransportError::TransportError;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const std::vector<std::uint8_t>& frame) = 0;
  virtual std::vector<std::uint8_t> receive() = 0;
  virtual void close() = 0;
};

// In-process duplex channel (a pair of FIFO frame queues). An optional random
// per-frame delivery delay models a slow pipe; FIFO order is preserved, as on
// any stream transport.
struct InProcOptions {
  double timeout_s = 30.0;
  double max_delay_s = 0.0;  // uniform in [0, max] per frame when > 0
  std::uint64_t delay_seed = 0;
};
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_inproc_pair(
    InProcOptions options = {});

// "tcp://host:port" or "host:port".
struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};
Endpoint parse_endpoint(const std::string& text);

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& endpoint);  // port 0 binds an ephemeral port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Transport> accept(double timeout_s = 30.0);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Transport> tcp_connect(const Endpoint& endpoint, double timeout_s = 30.0);

// ---------------------------------------------------------------------------
// Session plumbing.

// Simulator side: publish measures for the current step, await the echoing
// command frame, advance, repeat. Returns the number of commands processed.
// Ends gracefully when the peer closes; throws ProtocolError on a stale step
// echo or a command count mismatch. max_steps = 0 serves until the peer closes.
struct ServeOptions {
  std::uint64_t max_steps = 0;
};
std::uint64_t serve_session(SimulatorSession& session, Transport& transport,
                            const ServeOptions& options = {});

// Environment side: a SimulatorSession whose engine lives behind a transport.
// Construction blocks until the first measure frame arrives. A peer close
// (end of episode) flips active() to false; timeouts and decode failures
// propagate as exceptions.
class RemoteSession final : public SimulatorSession {
 public:
  explicit RemoteSession(std::unique_ptr<Transport> transport);

  int num_turbines() const override { return static_cast<int>(measures_.size()); }
  std::uint64_t step_index() const override { return step_; }
  const std::vector<TurbineMeasures>& measures() const override { return measures_; }
  void apply_commands(const std::vector<TurbineCommand>& commands) override;
  bool active() const override { return active_; }
  void close() override;

 private:
  std::unique_ptr<Transport> transport_;
  std::uint64_t step_ = 0;
  std::vector<TurbineMeasures> measures_;
  bool active_ = false;
};

// ---------------------------------------------------------------------------
// Window-averaged free-stream estimate from per-turbine measurements: the
// turbine with the highest window-averaged speed is taken as the free stream,
// returning its averaged speed and circular-mean direction.
class FreeStreamEstimator {
 public:
  explicit FreeStreamEstimator(int window_steps = 20);

  void observe(const std::vector<TurbineMeasures>& measures);
  bool ready() const { return seen_ > 0; }
  std::pair<double, double> estimate() const;  // (u_inf, phi_inf); throws if not ready
  void reset();

 private:
  int window_;
  std::vector<std::deque<double>> u_;
  std::vector<std::deque<double>> phi_;
  std::uint64_t seen_ = 0;
};

}  // namespace windlab
