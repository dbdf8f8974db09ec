// SPDX-License-Identifier: Apache-2.0
#pragma once

// Byte-stream transports for the backend protocol: a socketpair for
// in-process backends and stdin/stdout pipes for child processes.

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wardpose {

class ByteChannel {
 public:
  virtual ~ByteChannel() = default;
  // Throws ChannelClosed when the peer is gone.
  virtual void write_all(std::span<const std::byte> data) = 0;
  // Reads at least one byte unless the stream ended (returns 0). Throws
  // Timeout when nothing arrives before the deadline.
  virtual std::size_t read_some(std::span<std::byte> buf, std::chrono::steady_clock::time_point deadline) = 0;
  virtual void close() = 0;
};

// Owns a read and a write descriptor (possibly the same one).
class FdChannel final : public ByteChannel {
 public:
  FdChannel(int read_fd, int write_fd, bool owns = true);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_all(std::span<const std::byte> data) override;
  std::size_t read_some(std::span<std::byte> buf, std::chrono::steady_clock::time_point deadline) override;
  void close() override;
  // Stops further writes so the peer sees end of stream.
  void shutdown_write();

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
};

// Connected duplex pair (AF_UNIX socketpair).
std::pair<std::unique_ptr<FdChannel>, std::unique_ptr<FdChannel>> make_channel_pair();

// Child process whose stdin/stdout form the channel. The destructor closes
// the pipes, then terminates and reaps the child.
class Subprocess {
 public:
  // Throws BackendUnavailable if the process cannot be started.
  static Subprocess spawn(const std::vector<std::string>& argv);

  Subprocess(Subprocess&&) noexcept;
  Subprocess& operator=(Subprocess&&) noexcept;
  ~Subprocess();

  [[nodiscard]] int pid() const noexcept { return pid_; }
  // The channel is handed out once.
  std::unique_ptr<FdChannel> take_channel();
  // Waits for exit; returns the exit status or -1.
  int wait();

 private:
  Subprocess() = default;
  void terminate() noexcept;
  int pid_ = -1;
  std::unique_ptr<FdChannel> channel_;
};

// Whitespace split honouring double quotes.
std::vector<std::string> split_command(const std::string& command);

}  // namespace wardpose
