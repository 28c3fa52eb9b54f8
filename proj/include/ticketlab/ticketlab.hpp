// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0

#ifndef TICKETLAB_TICKETLAB_HPP
#define TICKETLAB_TICKETLAB_HPP

#include "autodiff.hpp"
#include "data.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "network.hpp"
#include "pruning.hpp"
#include "random.hpp"
#include "tensor.hpp"
#include "trainer.hpp"

#endif  // TICKETLAB_TICKETLAB_HPP
