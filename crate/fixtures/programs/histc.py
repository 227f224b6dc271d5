import paddle
t = paddle.to_tensor([1.0, 2.0, 1.0, -4.0], dtype='float32')
h = paddle.histogram(t, bins=4, min=-5, max=5)
idx = paddle.to_tensor([0, 2], dtype='int64')
print(h, paddle.gather(t, idx, axis=0))
