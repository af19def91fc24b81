# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython DAG weight store; the compiled twin of _store_py.DagStorePy.

Same algorithm and observable behavior; entity visit masks live in a
records x words uint64 matrix and the ancestor propagation loop runs on
raw pointers.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef class DagStoreCy:
    cdef public int w_confirm
    cdef public int w_contribution
    cdef public bint count_self_indirect
    cdef Py_ssize_t n          # records stored
    cdef Py_ssize_t cap        # record capacity
    cdef Py_ssize_t words      # mask words per record
    cdef Py_ssize_t flat_len   # used length of the flat edge array
    cdef object _mask, _gen, _weight, _confirmed, _flat, _off, _stack
    cdef public set tailing
    name = "cython"

    def __init__(self, int w_confirm, bint count_self_indirect=False,
                 int w_contribution=0):
        self.w_confirm = w_confirm
        self.w_contribution = w_contribution  # 0 disables crossing reports
        self.count_self_indirect = count_self_indirect
        self.n = 0
        self.cap = 1024
        self.words = 1
        self.flat_len = 0
        self._mask = np.zeros((self.cap, self.words), dtype=np.uint64)
        self._gen = np.zeros(self.cap, dtype=np.int32)
        self._weight = np.zeros(self.cap, dtype=np.int32)
        self._confirmed = np.zeros(self.cap, dtype=np.uint8)
        self._flat = np.zeros(4096, dtype=np.int64)
        self._off = np.zeros(self.cap + 1, dtype=np.int64)
        self._stack = np.zeros(1024, dtype=np.int64)
        self.tailing = set()

    def __len__(self):
        return self.n

    cdef void _grow_records(self):
        cdef Py_ssize_t new_cap = self.cap * 2
        self._mask = np.concatenate(
            [self._mask, np.zeros((new_cap - self.cap, self.words), dtype=np.uint64)]
        )
        self._gen = np.concatenate([self._gen, np.zeros(new_cap - self.cap, dtype=np.int32)])
        self._weight = np.concatenate(
            [self._weight, np.zeros(new_cap - self.cap, dtype=np.int32)]
        )
        self._confirmed = np.concatenate(
            [self._confirmed, np.zeros(new_cap - self.cap, dtype=np.uint8)]
        )
        self._off = np.concatenate([self._off, np.zeros(new_cap - self.cap, dtype=np.int64)])
        self.cap = new_cap

    cdef void _grow_words(self, Py_ssize_t need):
        cdef Py_ssize_t new_words = self.words
        while new_words < need:
            new_words *= 2
        padded = np.zeros((self.cap, new_words), dtype=np.uint64)
        padded[:, : self.words] = self._mask
        self._mask = padded
        self.words = new_words

    def add_record(self, int gen_e, tuple approved_ids):
        cdef Py_ssize_t rid, i, edges, a, top, need_stack
        cdef Py_ssize_t word = gen_e >> 6
        cdef unsigned long long bit = (<unsigned long long> 1) << (gen_e & 63)
        if self.n >= self.cap:
            self._grow_records()
        if word >= self.words:
            self._grow_words(word + 1)
        rid = self.n
        edges = len(approved_ids)

        cdef cnp.int64_t[:] off = self._off
        if self.flat_len + edges > self._flat.shape[0]:
            self._flat = np.concatenate(
                [self._flat, np.zeros(self._flat.shape[0] + edges, dtype=np.int64)]
            )
        cdef cnp.int64_t[:] flat = self._flat
        for i in range(edges):
            flat[self.flat_len + i] = approved_ids[i]
        off[rid] = self.flat_len
        self.flat_len += edges
        off[rid + 1] = self.flat_len

        cdef cnp.int32_t[:] gen = self._gen
        cdef cnp.int32_t[:] weight = self._weight
        cdef cnp.uint8_t[:] confirmed = self._confirmed
        cdef cnp.uint64_t[:, :] mask = self._mask
        gen[rid] = gen_e
        weight[rid] = 0
        confirmed[rid] = 0
        if not self.count_self_indirect:
            mask[rid, word] = bit

        self.n += 1
        self.tailing.add(rid)
        self.tailing.difference_update(approved_ids)

        newly_confirmed = []
        newly_capped = []
        if self._stack.shape[0] < self.n + 1:
            self._stack = np.zeros(2 * self.n + 64, dtype=np.int64)
        cdef cnp.int64_t[:] stack = self._stack
        top = 0
        for i in range(edges):
            stack[top] = flat[off[rid] + i]
            top += 1
        cdef int w_confirm = self.w_confirm
        cdef int w_contribution = self.w_contribution
        cdef bint count_self = self.count_self_indirect
        cdef Py_ssize_t j
        while top > 0:
            top -= 1
            a = stack[top]
            if mask[a, word] & bit:
                continue
            mask[a, word] = mask[a, word] | bit
            if count_self or gen[a] != gen_e:
                weight[a] += 1
                if weight[a] == w_contribution:
                    newly_capped.append(a)
                if weight[a] >= w_confirm and not confirmed[a]:
                    confirmed[a] = 1
                    newly_confirmed.append(a)
            # Worst case every record ends up on the stack once; capacity of
            # n entries is guaranteed above because visits are marked first.
            for j in range(off[a], off[a + 1]):
                stack[top] = flat[j]
                top += 1
                if top >= stack.shape[0]:
                    self._stack = np.concatenate(
                        [self._stack, np.zeros(self._stack.shape[0], dtype=np.int64)]
                    )
                    stack = self._stack
        return rid, newly_confirmed, newly_capped

    def inject_confirmed(self, int gen_e, tuple approved_ids=()):
        rid, _, _ = self.add_record(gen_e, approved_ids)
        self._confirmed[rid] = 1
        return rid

    def approvers_count(self, Py_ssize_t rid):
        return int(self._weight[rid])

    def is_confirmed(self, Py_ssize_t rid):
        return bool(self._confirmed[rid])

    def is_tailing(self, Py_ssize_t rid):
        return rid in self.tailing

    def tailing_ids(self):
        return sorted(self.tailing)

    def approver_entities(self, Py_ssize_t rid):
        out = []
        cdef Py_ssize_t w, b, e
        cdef unsigned long long m
        for w in range(self.words):
            m = self._mask[rid, w]
            b = 0
            while m:
                if m & 1:
                    e = (w << 6) + b
                    if self.count_self_indirect or e != self._gen[rid]:
                        out.append(e)
                m >>= 1
                b += 1
        return out

    @property
    def gen(self):
        return self._gen[: self.n]

    @property
    def weight(self):
        return self._weight[: self.n]

    @property
    def confirmed(self):
        return self._confirmed[: self.n]
