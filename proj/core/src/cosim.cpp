#include "windlab/cosim.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <mutex>

namespace windlab {

namespace {

using Clock = std::chrono::steady_clock;

Clock::duration to_duration(double seconds) {
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& b, double v) {
  put_u64(b, std::bit_cast<std::uint64_t>(v));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (static_cast<std::uint16_t>(p[1]) << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

constexpr std::array<std::uint8_t, 4> kMagic = {'W', 'F', 'C', 'B'};

std::size_t doubles_per_turbine(FrameType type) {
  return type == FrameType::kMeasure ? 12 : 3;
}

std::size_t frame_bytes(FrameType type, std::size_t m) {
  return kFrameHeaderBytes + 8 * doubles_per_turbine(type) * m + 4;
}

void append_header(std::vector<std::uint8_t>& out, FrameType type, std::uint16_t m,
                   std::uint64_t step) {
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kFrameVersion);
  out.push_back(static_cast<std::uint8_t>(type));
  put_u16(out, m);
  put_u64(out, step);
}

void append_crc(std::vector<std::uint8_t>& out) {
  put_u32(out, crc32(out.data(), out.size()));
}

struct FrameHeader {
  FrameType type;
  std::uint16_t m;
  std::uint64_t step;
};

// Validates the fixed header fields only (enough to know the frame length).
FrameHeader parse_header(const std::uint8_t* p, std::size_t n) {
  if (n < kFrameHeaderBytes)
    throw FrameDecodeError(DecodeErrorCode::kTruncated, "frame shorter than its header");
  if (!std::equal(kMagic.begin(), kMagic.end(), p))
    throw FrameDecodeError(DecodeErrorCode::kBadMagic, "bad frame magic");
  if (p[4] != kFrameVersion)
    throw FrameDecodeError(DecodeErrorCode::kBadVersion,
                           "unsupported frame version " + std::to_string(int(p[4])));
  if (p[5] != 1 && p[5] != 2)
    throw FrameDecodeError(DecodeErrorCode::kBadType,
                           "unknown frame type " + std::to_string(int(p[5])));
  FrameHeader h{static_cast<FrameType>(p[5]), get_u16(p + 6), get_u64(p + 8)};
  if (h.m == 0) throw FrameDecodeError(DecodeErrorCode::kBadLength, "zero turbine count");
  return h;
}

// Full validation: exact length and checksum.
FrameHeader parse_and_check(const std::vector<std::uint8_t>& bytes) {
  const FrameHeader h = parse_header(bytes.data(), bytes.size());
  const std::size_t expected = frame_bytes(h.type, h.m);
  if (bytes.size() != expected)
    throw FrameDecodeError(DecodeErrorCode::kBadLength,
                           "frame length " + std::to_string(bytes.size()) + ", expected " +
                               std::to_string(expected));
  const std::uint32_t stored = get_u32(bytes.data() + expected - 4);
  const std::uint32_t computed = crc32(bytes.data(), expected - 4);
  if (stored != computed)
    throw FrameDecodeError(DecodeErrorCode::kBadCrc, "frame checksum mismatch");
  return h;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

const char* to_string(DecodeErrorCode code) {
  switch (code) {
    case DecodeErrorCode::kTruncated: return "truncated";
    case DecodeErrorCode::kBadMagic: return "bad-magic";
    case DecodeErrorCode::kBadVersion: return "bad-version";
    case DecodeErrorCode::kBadType: return "bad-type";
    case DecodeErrorCode::kBadLength: return "bad-length";
    case DecodeErrorCode::kBadCrc: return "bad-crc";
  }
  return "unknown";
}

std::vector<std::uint8_t> encode(const MeasureFrame& frame) {
  const std::size_t m = frame.measures.size();
  if (m == 0 || m > 65535)
    throw std::invalid_argument("encode: measure frame needs 1..65535 turbines");
  std::vector<std::uint8_t> out;
  out.reserve(frame_bytes(FrameType::kMeasure, m));
  append_header(out, FrameType::kMeasure, static_cast<std::uint16_t>(m), frame.step);
  for (const TurbineMeasures& ms : frame.measures) {
    put_f64(out, ms.wind_speed);
    put_f64(out, ms.wind_dir);
    put_f64(out, ms.power_w);
    put_f64(out, ms.yaw_deg);
    put_f64(out, ms.pitch_deg);
    put_f64(out, ms.torque_frac);
    for (double v : ms.mop) put_f64(out, v);
    for (double v : ms.mip) put_f64(out, v);
  }
  append_crc(out);
  return out;
}

std::vector<std::uint8_t> encode(const CommandFrame& frame) {
  const std::size_t m = frame.commands.size();
  if (m == 0 || m > 65535)
    throw std::invalid_argument("encode: command frame needs 1..65535 turbines");
  std::vector<std::uint8_t> out;
  out.reserve(frame_bytes(FrameType::kCommand, m));
  append_header(out, FrameType::kCommand, static_cast<std::uint16_t>(m), frame.step);
  for (const TurbineCommand& c : frame.commands) {
    put_f64(out, c.yaw_target_deg);
    put_f64(out, c.pitch_target_deg);
    put_f64(out, c.torque_target_frac);
  }
  append_crc(out);
  return out;
}

FrameType peek_frame_type(const std::vector<std::uint8_t>& bytes) {
  return parse_header(bytes.data(), bytes.size()).type;
}

MeasureFrame decode_measure(const std::vector<std::uint8_t>& bytes) {
  const FrameHeader h = parse_and_check(bytes);
  if (h.type != FrameType::kMeasure)
    throw FrameDecodeError(DecodeErrorCode::kBadType, "expected a measure frame");
  MeasureFrame frame;
  frame.step = h.step;
  frame.measures.resize(h.m);
  const std::uint8_t* p = bytes.data() + kFrameHeaderBytes;
  for (TurbineMeasures& ms : frame.measures) {
    ms.wind_speed = get_f64(p); p += 8;
    ms.wind_dir = get_f64(p); p += 8;
    ms.power_w = get_f64(p); p += 8;
    ms.yaw_deg = get_f64(p); p += 8;
    ms.pitch_deg = get_f64(p); p += 8;
    ms.torque_frac = get_f64(p); p += 8;
    for (double& v : ms.mop) { v = get_f64(p); p += 8; }
    for (double& v : ms.mip) { v = get_f64(p); p += 8; }
  }
  return frame;
}

CommandFrame decode_command(const std::vector<std::uint8_t>& bytes) {
  const FrameHeader h = parse_and_check(bytes);
  if (h.type != FrameType::kCommand)
    throw FrameDecodeError(DecodeErrorCode::kBadType, "expected a command frame");
  CommandFrame frame;
  frame.step = h.step;
  frame.commands.resize(h.m);
  const std::uint8_t* p = bytes.data() + kFrameHeaderBytes;
  for (TurbineCommand& c : frame.commands) {
    c.yaw_target_deg = get_f64(p); p += 8;
    c.pitch_target_deg = get_f64(p); p += 8;
    c.torque_target_frac = get_f64(p); p += 8;
  }
  return frame;
}

// ---------------------------------------------------------------------------
// In-process transport.

namespace {

struct FrameQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::pair<Clock::time_point, std::vector<std::uint8_t>>> items;
  bool closed = false;

  void push(std::vector<std::uint8_t> bytes, Clock::time_point ready) {
    {
      std::lock_guard<std::mutex> lk(mu);
      if (closed) throw TransportClosed("channel is closed");
      items.emplace_back(ready, std::move(bytes));
    }
    cv.notify_all();
  }

  std::vector<std::uint8_t> pop(double timeout_s) {
    std::unique_lock<std::mutex> lk(mu);
    const Clock::time_point deadline = Clock::now() + to_duration(timeout_s);
    for (;;) {
      const Clock::time_point now = Clock::now();
      if (!items.empty() && items.front().first <= now) {
        std::vector<std::uint8_t> bytes = std::move(items.front().second);
        items.pop_front();
        return bytes;
      }
      // Queued-but-undelivered frames still count as pending after a close,
      // mirroring data that was in flight before a socket FIN.
      if (items.empty() && closed) throw TransportClosed("peer closed the channel");
      if (now >= deadline) throw TransportTimeout("frame receive timed out");
      cv.wait_until(lk, items.empty() ? deadline : std::min(deadline, items.front().first));
    }
  }

  void close() {
    {
      std::lock_guard<std::mutex> lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

struct InProcShared {
  FrameQueue a_to_b;
  FrameQueue b_to_a;
  std::mutex delay_mu;
  Rng delay_rng{0};
  InProcOptions options;

  Clock::time_point delivery_time() {
    if (options.max_delay_s <= 0.0) return Clock::now();
    std::lock_guard<std::mutex> lk(delay_mu);
    return Clock::now() + to_duration(delay_rng.uniform(0.0, options.max_delay_s));
  }
};

class InProcTransport final : public Transport {
 public:
  InProcTransport(std::shared_ptr<InProcShared> shared, bool side_a)
      : shared_(std::move(shared)), side_a_(side_a) {}
  ~InProcTransport() override { close(); }  // wakes a peer blocked in receive()

  void send(const std::vector<std::uint8_t>& frame) override {
    out().push(frame, shared_->delivery_time());
  }
  std::vector<std::uint8_t> receive() override { return in().pop(shared_->options.timeout_s); }
  void close() override {
    out().close();
    in().close();
  }

 private:
  FrameQueue& out() { return side_a_ ? shared_->a_to_b : shared_->b_to_a; }
  FrameQueue& in() { return side_a_ ? shared_->b_to_a : shared_->a_to_b; }

  std::shared_ptr<InProcShared> shared_;
  bool side_a_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_inproc_pair(
    InProcOptions options) {
  auto shared = std::make_shared<InProcShared>();
  shared->options = options;
  shared->delay_rng = Rng(options.delay_seed);
  return {std::make_unique<InProcTransport>(shared, true),
          std::make_unique<InProcTransport>(shared, false)};
}

// ---------------------------------------------------------------------------
// TCP transport.

Endpoint parse_endpoint(const std::string& text) {
  std::string rest = text;
  if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
  const std::size_t colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size())
    throw std::invalid_argument("endpoint must be [tcp://]host:port, got \"" + text + "\"");
  Endpoint ep;
  ep.host = rest.substr(0, colon);
  const std::string port_str = rest.substr(colon + 1);
  unsigned port = 0;
  const auto [p, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
  if (ec != std::errc() || p != port_str.data() + port_str.size() || port > 65535)
    throw std::invalid_argument("bad port in endpoint \"" + text + "\"");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

bool wait_for_fd(int fd, short events, double timeout_s) {
  pollfd pfd{fd, events, 0};
  const int ms = std::max(0, static_cast<int>(timeout_s * 1000.0));
  const int rc = ::poll(&pfd, 1, ms);
  if (rc < 0) throw_errno("poll");
  return rc > 0;
}

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list) ::freeaddrinfo(list);
  }
};

class TcpTransport final : public Transport {
 public:
  TcpTransport(int fd, double timeout_s) : fd_(fd), timeout_s_(timeout_s) {}
  ~TcpTransport() override { close(); }

  void send(const std::vector<std::uint8_t>& frame) override {
    if (fd_ < 0) throw TransportClosed("socket is closed");
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EPIPE || errno == ECONNRESET)
          throw TransportClosed("peer closed the connection");
        throw_errno("send");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::vector<std::uint8_t> receive() override {
    if (fd_ < 0) throw TransportClosed("socket is closed");
    std::array<std::uint8_t, kFrameHeaderBytes> header;
    read_exact(header.data(), header.size(), /*eof_ok_before_first_byte=*/true);
    // The header determines the frame length; full validation happens in
    // decode. An unparseable header means the stream cannot be re-framed.
    const FrameHeader h = parse_header(header.data(), header.size());
    std::vector<std::uint8_t> bytes(frame_bytes(h.type, h.m));
    std::copy(header.begin(), header.end(), bytes.begin());
    read_exact(bytes.data() + header.size(), bytes.size() - header.size(), false);
    return bytes;
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  void read_exact(std::uint8_t* dst, std::size_t n, bool eof_ok_before_first_byte) {
    std::size_t got = 0;
    while (got < n) {
      if (!wait_for_fd(fd_, POLLIN, timeout_s_))
        throw TransportTimeout("socket receive timed out");
      const ssize_t r = ::recv(fd_, dst + got, n - got, 0);
      if (r == 0) {
        if (got == 0 && eof_ok_before_first_byte)
          throw TransportClosed("peer closed the connection");
        throw TransportError("connection dropped mid-frame");
      }
      if (r < 0) {
        if (errno == EINTR) continue;
        throw_errno("recv");
      }
      got += static_cast<std::size_t>(r);
    }
  }

  int fd_;
  double timeout_s_;
};

}  // namespace

TcpListener::TcpListener(const Endpoint& endpoint) {
  AddrInfo res;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  const std::string port_str = std::to_string(endpoint.port);
  const int rc = ::getaddrinfo(endpoint.host.c_str(), port_str.c_str(), &hints, &res.list);
  if (rc != 0)
    throw TransportError("getaddrinfo(" + endpoint.host + "): " + gai_strerror(rc));
  for (addrinfo* ai = res.list; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 4) == 0) {
      fd_ = fd;
      sockaddr_storage bound{};
      socklen_t len = sizeof(bound);
      if (::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len) == 0) {
        if (bound.ss_family == AF_INET)
          port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
        else if (bound.ss_family == AF_INET6)
          port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
      }
      return;
    }
    ::close(fd);
  }
  throw_errno("bind/listen on " + endpoint.host + ":" + port_str);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept(double timeout_s) {
  if (fd_ < 0) throw TransportError("listener is closed");
  if (!wait_for_fd(fd_, POLLIN, timeout_s)) throw TransportTimeout("accept timed out");
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw_errno("accept");
  return std::make_unique<TcpTransport>(fd, timeout_s);
}

std::unique_ptr<Transport> tcp_connect(const Endpoint& endpoint, double timeout_s) {
  AddrInfo res;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  const std::string port_str = std::to_string(endpoint.port);
  const int rc = ::getaddrinfo(endpoint.host.c_str(), port_str.c_str(), &hints, &res.list);
  if (rc != 0)
    throw TransportError("getaddrinfo(" + endpoint.host + "): " + gai_strerror(rc));
  int last_errno = ECONNREFUSED;
  for (addrinfo* ai = res.list; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
      return std::make_unique<TcpTransport>(fd, timeout_s);
    last_errno = errno;
    ::close(fd);
  }
  errno = last_errno;
  throw_errno("connect to " + endpoint.host + ":" + port_str);
}

// ---------------------------------------------------------------------------
// Session plumbing.

std::uint64_t serve_session(SimulatorSession& session, Transport& transport,
                            const ServeOptions& options) {
  std::uint64_t served = 0;
  transport.send(encode(MeasureFrame{session.step_index(), session.measures()}));
  while (options.max_steps == 0 || served < options.max_steps) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = transport.receive();
    } catch (const TransportClosed&) {
      break;  // peer ended the episode
    }
    const CommandFrame cmd = decode_command(bytes);
    if (cmd.step != session.step_index())
      throw ProtocolError("command echoes step " + std::to_string(cmd.step) +
                          ", simulator is at step " + std::to_string(session.step_index()));
    if (static_cast<int>(cmd.commands.size()) != session.num_turbines())
      throw ProtocolError("command frame for " + std::to_string(cmd.commands.size()) +
                          " turbines, farm has " + std::to_string(session.num_turbines()));
    session.apply_commands(cmd.commands);
    ++served;
    transport.send(encode(MeasureFrame{session.step_index(), session.measures()}));
  }
  transport.close();
  session.close();
  return served;
}

RemoteSession::RemoteSession(std::unique_ptr<Transport> transport)
    : transport_(std::move(transport)) {
  const MeasureFrame first = decode_measure(transport_->receive());
  step_ = first.step;
  measures_ = first.measures;
  active_ = true;
}

void RemoteSession::apply_commands(const std::vector<TurbineCommand>& commands) {
  if (!active_) throw std::logic_error("RemoteSession: session has ended");
  if (commands.size() != measures_.size())
    throw std::invalid_argument("RemoteSession: command count != turbine count");
  try {
    transport_->send(encode(CommandFrame{step_, commands}));
    const MeasureFrame next = decode_measure(transport_->receive());
    if (next.step != step_ + 1)
      throw ProtocolError("measure frame for step " + std::to_string(next.step) +
                          ", expected " + std::to_string(step_ + 1));
    step_ = next.step;
    measures_ = next.measures;
  } catch (const TransportClosed&) {
    active_ = false;  // graceful end of episode, last measures stay readable
  }
}

void RemoteSession::close() {
  active_ = false;
  transport_->close();
}

// ---------------------------------------------------------------------------
// Free-stream estimation.

FreeStreamEstimator::FreeStreamEstimator(int window_steps) : window_(window_steps) {
  if (window_steps < 1)
    throw std::invalid_argument("FreeStreamEstimator: window must be >= 1 step");
}

void FreeStreamEstimator::observe(const std::vector<TurbineMeasures>& measures) {
  if (measures.empty()) throw std::invalid_argument("FreeStreamEstimator: no measures");
  if (u_.empty()) {
    u_.resize(measures.size());
    phi_.resize(measures.size());
  } else if (u_.size() != measures.size()) {
    throw std::invalid_argument("FreeStreamEstimator: turbine count changed");
  }
  for (std::size_t i = 0; i < measures.size(); ++i) {
    u_[i].push_back(measures[i].wind_speed);
    phi_[i].push_back(measures[i].wind_dir);
    if (u_[i].size() > static_cast<std::size_t>(window_)) {
      u_[i].pop_front();
      phi_[i].pop_front();
    }
  }
  ++seen_;
}

std::pair<double, double> FreeStreamEstimator::estimate() const {
  if (seen_ == 0) throw std::logic_error("FreeStreamEstimator: no samples buffered yet");
  std::size_t best = 0;
  double best_u = -1.0;
  for (std::size_t i = 0; i < u_.size(); ++i) {
    double sum = 0.0;
    for (double v : u_[i]) sum += v;
    const double mean = sum / static_cast<double>(u_[i].size());
    if (mean > best_u) {
      best_u = mean;
      best = i;
    }
  }
  const std::vector<double> dirs(phi_[best].begin(), phi_[best].end());
  return {best_u, circular_mean_deg(dirs)};
}

void FreeStreamEstimator::reset() {
  u_.clear();
  phi_.clear();
  seen_ = 0;
}

}  // namespace windlab
