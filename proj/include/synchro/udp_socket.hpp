#pragma once

#include <netinet/in.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace synchro {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// IPv4 host:port. Hostnames are resolved when the endpoint is parsed.
struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Endpoint parse(const std::string& text);
  std::string to_string() const { return host + ":" + std::to_string(port); }
  sockaddr_in to_sockaddr() const;
  static Endpoint from_sockaddr(const sockaddr_in& addr);

  bool operator==(const Endpoint&) const = default;
};

struct Datagram {
  std::size_t size = 0;
  Endpoint from;
};

/// Owns one UDP socket file descriptor.
class UdpSocket {
 public:
  UdpSocket();
  ~UdpSocket();
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  void bind(const Endpoint& local);
  void set_broadcast(bool enabled);
  void set_receive_buffer(int bytes);
  Endpoint local_endpoint() const;

  void send_to(std::span<const std::uint8_t> bytes, const Endpoint& to);
  /// Waits at most `timeout`; std::nullopt when nothing arrived.
  std::optional<Datagram> receive(std::span<std::uint8_t> buffer,
                                  std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

/// Wall-clock (CLOCK_REALTIME) nanoseconds since the Unix epoch.
std::int64_t wall_clock_ns();

}  // namespace synchro
