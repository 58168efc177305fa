// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model checkpoints (little-endian):
//
//   char[5]  "LMSC1"
//   u32      architecture JSON length, then the JSON text
//   u64      FNV-1a digest of the JSON text
//   u32      feature spec bits
//   u32      parameter count P; per parameter:
//              u32 name length, name, u32 rows, u32 cols, f32 values
//   u32      buffer count B; per buffer:
//              u32 name length, name, u32 width, f32 running mean, f32 running var
//   u8       optimizer state present; if set: u64 step, then per parameter
//              f32 first moment, f32 second moment (in parameter order)

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/network.hpp"

namespace lmseg {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t limit = 1u << 24) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > limit) fail(ErrorCode::ParseError, "checkpoint string too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) fail(ErrorCode::ParseError, "truncated checkpoint");
  return s;
}

template <class T>
void put_tensor(std::ostream& out, const ad::Tensor<T>& t) {
  for (T v : t.data) put_le<float>(out, static_cast<float>(v));
}

template <class T>
void get_tensor(std::istream& in, ad::Tensor<T>& t) {
  for (T& v : t.data) v = static_cast<T>(get_le<float>(in));
}

}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& out, const LMSeg<T>& model, const std::uint64_t* optimizer_step = nullptr) {
  out.write("LMSC1", 5);
  const std::string arch = to_json(model.config()).dump();
  detail::put_string(out, arch);
  detail::put_le<std::uint64_t>(out, fnv1a(arch));
  detail::put_le<std::uint32_t>(out, model.config().feature_spec.bits());
  const auto& params = model.params().params();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_string(out, p.name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.var.rows()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.var.cols()));
    detail::put_tensor(out, p.var.value());
  }
  const auto& buffers = model.params().buffers();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(buffers.size()));
  for (const auto& b : buffers) {
    detail::put_string(out, b.name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.stats.mean.numel()));
    detail::put_tensor(out, b.stats.mean);
    detail::put_tensor(out, b.stats.var);
  }
  detail::put_le<std::uint8_t>(out, optimizer_step ? 1 : 0);
  if (optimizer_step) {
    detail::put_le<std::uint64_t>(out, *optimizer_step);
    for (const auto& p : params) {
      detail::put_tensor(out, p.m);
      detail::put_tensor(out, p.v);
    }
  }
  if (!out) fail(ErrorCode::IoError, "failed writing checkpoint");
}

template <class T>
struct LoadedModel {
  std::unique_ptr<LMSeg<T>> model;
  bool has_optimizer = false;
  std::uint64_t step = 0;
};

template <class T>
LoadedModel<T> read_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, "LMSC1", 5) != 0) fail(ErrorCode::ParseError, "not an LMSC1 checkpoint");
  const std::string arch_text = detail::get_string(in);
  if (detail::get_le<std::uint64_t>(in) != fnv1a(arch_text)) fail(ErrorCode::ParseError, "checkpoint architecture digest mismatch");
  ArchConfig arch;
  try {
    arch = arch_from_json(nlohmann::json::parse(arch_text));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("checkpoint architecture: ") + e.what());
  }
  if (detail::get_le<std::uint32_t>(in) != arch.feature_spec.bits()) fail(ErrorCode::ParseError, "checkpoint feature spec disagrees");

  LoadedModel<T> out;
  out.model = std::make_unique<LMSeg<T>>(arch, 0);
  auto& store = out.model->params();
  const auto np = detail::get_le<std::uint32_t>(in);
  if (np != store.params().size()) fail(ErrorCode::ParseError, "checkpoint parameter count disagrees with its architecture");
  for (std::uint32_t i = 0; i < np; ++i) {
    const std::string name = detail::get_string(in);
    nn::Parameter<T>* p = store.find(name);
    if (!p) fail(ErrorCode::ParseError, "unknown checkpoint parameter " + name);
    const auto rows = detail::get_le<std::uint32_t>(in);
    const auto cols = detail::get_le<std::uint32_t>(in);
    if (rows != p->var.rows() || cols != p->var.cols()) fail(ErrorCode::ShapeMismatch, "checkpoint shape of " + name);
    detail::get_tensor(in, p->var.mutable_value());
  }
  const auto nb = detail::get_le<std::uint32_t>(in);
  if (nb != store.buffers().size()) fail(ErrorCode::ParseError, "checkpoint buffer count disagrees with its architecture");
  for (std::uint32_t i = 0; i < nb; ++i) {
    const std::string name = detail::get_string(in);
    const auto width = detail::get_le<std::uint32_t>(in);
    nn::Buffer<T>* buf = nullptr;
    for (auto& b : store.buffers()) {
      if (b.name == name) buf = &b;
    }
    if (!buf || buf->stats.mean.numel() != width) fail(ErrorCode::ParseError, "checkpoint buffer " + name);
    detail::get_tensor(in, buf->stats.mean);
    detail::get_tensor(in, buf->stats.var);
  }
  out.has_optimizer = detail::get_le<std::uint8_t>(in) != 0;
  if (out.has_optimizer) {
    out.step = detail::get_le<std::uint64_t>(in);
    for (auto& p : store.params()) {
      detail::get_tensor(in, p.m);
      detail::get_tensor(in, p.v);
    }
  }
  return out;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const LMSeg<T>& model, const std::uint64_t* optimizer_step = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, model, optimizer_step);
}

template <class T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return read_checkpoint<T>(in);
}

}  // namespace lmseg
