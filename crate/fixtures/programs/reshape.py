import numpy as np
import tensorflow as tf
a = tf.constant(np.arange(24), dtype="int32")
b = tf.reshape(a, [2, 3, 4])
c = tf.transpose(b, perm=(2, 0, 1))
print(c.shape)
